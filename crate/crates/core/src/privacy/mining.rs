use std::collections::HashMap;

use itertools::Itertools;

use super::{AttrSet, MiningParams, PrivacyProfile, QiConfig};
use crate::engine::{LogEntry, Response, ResponseLog, ResponseRelation};
use crate::sqlabs::{self, CmpOp, Literal, Operand, SqlAst};

/// Minimum equivalence-class size of `rel` over `q ∩ rel.columns`, counting
/// duplicate rows. `None` when there are no rows or no attribute of `q` is
/// present.
pub fn compute_k(rel: &ResponseRelation, q: &AttrSet) -> Option<usize> {
    let idx: Vec<usize> = rel
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| q.contains(*c))
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() || rel.rows.is_empty() {
        return None;
    }
    let mut classes: HashMap<Vec<&str>, usize> = HashMap::new();
    for row in &rel.rows {
        let key = idx.iter().map(|&i| row[i].as_str()).collect();
        *classes.entry(key).or_default() += 1;
    }
    classes.into_values().min()
}

/// What a response discloses about the rows it returns: the projected
/// columns plus every attribute pinned by a top-level `attr = literal`
/// conjunct, as a constant column. Aggregate (`COUNT(*)`) responses release
/// no rows and yield `None`.
pub fn disclosed_view(ast: Option<&SqlAst>, rel: &ResponseRelation) -> Option<ResponseRelation> {
    if ast.is_some_and(SqlAst::is_count) || rel.columns == [sqlabs::COUNT_STAR] {
        return None;
    }
    let mut view = rel.clone();
    let Some(selection) = ast.and_then(|a| a.selection.as_ref()) else {
        return Some(view);
    };
    for c in selection.conjuncts() {
        if c.op != CmpOp::Eq || view.columns.contains(&c.column) {
            continue;
        }
        if let Operand::Value(lit @ (Literal::Number(_) | Literal::Str(_))) = &c.rhs {
            let value = lit.text().unwrap_or_default().to_string();
            view.columns.push(c.column.clone());
            for row in &mut view.rows {
                row.push(value.clone());
            }
        }
    }
    Some(view)
}

/// Limits of a single log entry over every quasi-identifier subset of size
/// at most `m_max`, without any `k` range filter.
pub fn entry_limits(entry: &LogEntry, cfg: &QiConfig, m_max: usize) -> PrivacyProfile {
    let mut profile = PrivacyProfile::new();
    let Response::Rows(rel) = &entry.response else {
        return profile;
    };
    let ast = if entry.query.sql.trim().is_empty() {
        None
    } else {
        sqlabs::parse(&entry.query.sql).ok()
    };
    let Some(view) = disclosed_view(ast.as_ref(), rel) else {
        return profile;
    };
    let attrs: Vec<&String> = view
        .columns
        .iter()
        .filter(|c| cfg.quasi_identifiers.contains(*c))
        .sorted()
        .dedup()
        .collect();
    for size in 1..=m_max.min(attrs.len()) {
        for combo in attrs.iter().combinations(size) {
            let q: AttrSet = combo.into_iter().map(|s| (*s).clone()).collect();
            if let Some(k) = compute_k(&view, &q) {
                profile.observe(q, k, Some(&entry.query.id));
            }
        }
    }
    profile
}

/// Per-`q` minimum `k` over all released responses of `log`, restricted to
/// the configured `k` range.
pub fn mine_profile(log: &ResponseLog, cfg: &QiConfig, params: &MiningParams) -> PrivacyProfile {
    let mut profile = PrivacyProfile::new();
    for entry in log.entries() {
        profile.merge(&entry_limits(entry, cfg, params.m_max));
    }
    profile.retain_k_range(params.k_lo, params.k_hi);
    profile
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Database;
    use crate::fixtures;
    use crate::privacy::PrivacyLimit;
    use crate::sqlabs::RawQuery;

    fn rel(columns: &[&str], rows: &[&[&str]]) -> ResponseRelation {
        ResponseRelation {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
            source_query_id: "q".into(),
        }
    }

    fn set(items: &[&str]) -> AttrSet {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn k_of_identical_rows() {
        let r = rel(&["age", "zipcode", "salary"], &[&[">50", "839567", "72K"] as &[&str]; 5]);
        assert_eq!(compute_k(&r, &set(&["age", "zipcode"])), Some(5));
    }

    #[test]
    fn k_of_single_row() {
        let r = rel(&["dob", "city", "diagnoses"], &[&["1920", "Cork", "Heart Disease"]]);
        assert_eq!(compute_k(&r, &set(&["dob", "city"])), Some(1));
    }

    #[test]
    fn k_none_cases() {
        let r = rel(&["a"], &[]);
        assert_eq!(compute_k(&r, &set(&["a"])), None);
        let r = rel(&["a"], &[&["1"]]);
        assert_eq!(compute_k(&r, &set(&["b"])), None);
    }

    #[test]
    fn attributes_outside_the_response_are_ignored() {
        let r = rel(&["a", "b"], &[&["1", "x"], &["1", "y"], &["2", "x"]]);
        assert_eq!(compute_k(&r, &set(&["a", "zzz"])), Some(1));
        assert_eq!(compute_k(&r, &set(&["b"])), Some(1));
    }

    #[test]
    fn equality_conjuncts_become_constant_columns() {
        let r = rel(&["salary"], &[&["150k"]]);
        let ast = sqlabs::parse("SELECT salary FROM t WHERE city = 'Rennes' AND age > 3").unwrap();
        let view = disclosed_view(Some(&ast), &r).unwrap();
        assert_eq!(view.columns, vec!["salary", "city"]);
        assert_eq!(view.rows, vec![vec!["150k", "Rennes"]]);

        let ast = sqlabs::parse("SELECT salary FROM t WHERE city = 'a' OR city = 'b'").unwrap();
        assert_eq!(disclosed_view(Some(&ast), &r).unwrap().columns, vec!["salary"]);

        let ast = sqlabs::parse("SELECT COUNT(*) FROM t WHERE city = 'a'").unwrap();
        assert!(disclosed_view(Some(&ast), &r).is_none());
    }

    #[test]
    fn male_response_mines_k_one_for_full_qi_set() {
        let db = Database::new().with_table(fixtures::temp_table());
        let q = RawQuery::new(
            "r2",
            "analyst",
            0,
            "SELECT age, zipcode, county FROM temp_table WHERE gender = 'male'",
        );
        let log = db.run_log(&[q]).unwrap();
        let cfg = QiConfig::new(Vec::<&str>::new(), ["age", "zipcode", "county"], ["salary"]).unwrap();
        let params = MiningParams {
            m_max: 3,
            k_lo: 1,
            k_hi: usize::MAX,
        };
        let profile = mine_profile(&log, &cfg, &params);
        assert_eq!(
            profile.get(&set(&["age", "county", "zipcode"])),
            Some(PrivacyLimit::new(1, ["age", "zipcode", "county"]))
        );
    }

    #[test]
    fn empty_log_empty_profile() {
        let cfg = QiConfig::new(["id"], ["a"], ["s"]).unwrap();
        assert!(mine_profile(&ResponseLog::new(), &cfg, &MiningParams::default()).is_empty());
    }

    #[test]
    fn suppressed_entries_contribute_nothing() {
        let cfg = QiConfig::new(["id"], ["a"], ["s"]).unwrap();
        let mut log = ResponseLog::new();
        log.push(RawQuery::new("1", "u", 0, "SELECT a FROM t"), Response::Suppressed);
        assert!(mine_profile(&log, &cfg, &MiningParams::default()).is_empty());
    }

    #[test]
    fn k_range_and_subset_cap() {
        let db = Database::new().with_table(fixtures::temp_table());
        let log = db
            .run_log(&[RawQuery::new(
                "1",
                "u",
                0,
                "SELECT age, zipcode, county FROM temp_table",
            )])
            .unwrap();
        let cfg = QiConfig::new(Vec::<&str>::new(), ["age", "zipcode", "county"], ["salary"]).unwrap();
        let singles = mine_profile(&log, &cfg, &MiningParams::new(1, 1, 1000).unwrap());
        assert_eq!(singles.len(), 3);
        assert!(singles.limits().all(|l| l.q.len() == 1));
        let high = mine_profile(&log, &cfg, &MiningParams::new(3, 5, 1000).unwrap());
        // county classes are Cork=7, Dublin=7
        assert_eq!(high.limits().collect::<Vec<_>>(), vec![PrivacyLimit::new(7, ["county"])]);
    }
}
