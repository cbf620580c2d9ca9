//! Inference attacks on five inserted unique census records.
//!
//! An `analyst` issues count-query workflows in both logs. In the run log an
//! insider additionally runs one script per inserted record, each in its own
//! session (`insider-1` to `insider-5`). A script
//! narrows in on the record with counts over predicate sets that overlap
//! the record's identifying attributes, confirms the record is unique, then
//! probes both salary classes. Whichever probe counts 1 is the salary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    analyse, pair_cover, replay, sql_literal, Assertion, Manifest, QueryTemplate, QueryTemplateSet, ScenarioResult,
    Step, Summary, Workflow, WorkloadError,
};
use crate::engine::{Database, Mutation};
use crate::ngram::{compare, TemplateLog};
use crate::privacy::QiConfig;

pub const ATTACK_LENGTHS: [usize; 5] = [7, 9, 17, 13, 10];
/// Mismatch counts reported for the original experiment; kept for
/// comparison only.
pub const PAPER_MISMATCHES: [usize; 5] = [5, 7, 19, 15, 13];

const TABLE: &str = "census";
const ATTRS: [&str; 6] = ["age", "workclass", "education", "occupation", "native-country", "sex"];
const SALARIES: [&str; 2] = [">50K", "<=50K"];
const EXTRA_NORMATIVE_WORKFLOWS: usize = 150;
const RUN_WORKFLOWS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack: usize,
    pub target: String,
    pub length: usize,
    /// Log indices of the script's first and last query.
    pub span: (usize, usize),
    /// Count returned by the query on the identifying attributes.
    pub target_count: Option<u64>,
    pub mismatches: usize,
    pub paper_mismatches: usize,
    pub revealed_salary: Option<String>,
    pub inserted_salary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub attacks: Vec<AttackOutcome>,
    /// Run-log mismatches whose first window starts outside every script.
    pub unattributed_mismatches: usize,
}

struct Target {
    description: &'static str,
    record: [&'static str; 7],
    identifying: &'static [&'static str],
}

const TARGETS: [Target; 5] = [
    Target {
        description: "occupation post-doc",
        record: ["29", "Private", "Doctorate", "post-doc", "United-States", "Female", "<=50K"],
        identifying: &["occupation"],
    },
    Target {
        description: "native-country Malaysia",
        record: ["45", "Private", "Masters", "Exec-managerial", "Malaysia", "Male", ">50K"],
        identifying: &["native-country"],
    },
    Target {
        description: "native-country Spain, age 33",
        record: ["33", "Self-emp-inc", "Bachelors", "Sales", "Spain", "Male", ">50K"],
        identifying: &["age", "native-country"],
    },
    Target {
        description: "native-country Singapore, age 32",
        record: ["32", "Private", "HS-grad", "Craft-repair", "Singapore", "Female", "<=50K"],
        identifying: &["age", "native-country"],
    },
    Target {
        description: "native-country Singapore, occupation Academics",
        record: ["51", "State-gov", "Doctorate", "Academics", "Singapore", "Male", ">50K"],
        identifying: &["occupation", "native-country"],
    },
];

fn qi_config() -> QiConfig {
    QiConfig::new(Vec::<&str>::new(), ATTRS, ["salary"]).expect("static config is valid")
}

fn count_sql(preds: &[(&str, &str)]) -> String {
    let clause = preds
        .iter()
        .map(|(a, v)| format!("{a} = {}", sql_literal(v)))
        .collect::<Vec<_>>()
        .join(" AND ");
    format!("SELECT COUNT(*) FROM {TABLE} WHERE {clause}")
}

impl Target {
    fn value(&self, attr: &str) -> &'static str {
        let i = ATTRS.iter().position(|a| *a == attr).expect("census attribute");
        self.record[i]
    }

    fn salary(&self) -> &'static str {
        self.record[6]
    }

    fn insert(&self) -> Mutation {
        let mut values: Vec<(String, String)> = ATTRS
            .iter()
            .map(|a| (a.to_string(), self.value(a).to_string()))
            .collect();
        values.push(("salary".into(), self.salary().into()));
        Mutation::Insert {
            table: TABLE.into(),
            values,
        }
    }

    fn identifying_preds(&self) -> Vec<(&'static str, &'static str)> {
        self.identifying.iter().map(|a| (*a, self.value(a))).collect()
    }

    /// Narrowing counts, the uniqueness check, then one probe per salary
    /// class; `length` queries in total.
    fn script(&self, length: usize) -> Vec<String> {
        let narrowing = length - 1 - SALARIES.len();
        let is_identifying = |a: &&str| self.identifying.contains(a);
        let mut candidates: Vec<Vec<&str>> = (1..=ATTRS.len())
            .flat_map(|size| itertools::Itertools::combinations(ATTRS.iter().copied(), size))
            .filter(|s| s.iter().any(is_identifying))
            .filter(|s| !(s.len() == self.identifying.len() && s.iter().all(is_identifying)))
            .collect();
        candidates.truncate(narrowing);
        assert_eq!(candidates.len(), narrowing, "not enough narrowing queries");
        let mut out: Vec<String> = candidates
            .iter()
            .map(|s| count_sql(&s.iter().map(|a| (*a, self.value(a))).collect::<Vec<_>>()))
            .collect();
        let ident = self.identifying_preds();
        out.push(count_sql(&ident));
        for salary in SALARIES {
            let mut probe = ident.clone();
            probe.push(("salary", salary));
            out.push(count_sql(&probe));
        }
        out
    }
}

/// Count-query templates of the analyst workload over `table`'s values.
pub fn census_templates(table: &crate::engine::Table) -> QueryTemplateSet {
    let distinct = |col: &str| -> Vec<String> {
        let i = table.column_index(col).expect("census column");
        let set: std::collections::BTreeSet<&String> = table.rows.iter().map(|r| &r[i]).collect();
        set.into_iter().cloned().collect()
    };
    let pools = BTreeMap::from([
        ("sex".to_string(), distinct("sex")),
        ("education".to_string(), distinct("education")),
        ("workclass".to_string(), distinct("workclass")),
        ("occupation".to_string(), distinct("occupation")),
        ("native-country".to_string(), distinct("native-country")),
        ("age".to_string(), (25..=65).step_by(5).map(|a| a.to_string()).collect()),
    ]);
    let t = |name: &str, clause: &str| QueryTemplate::new(name, format!("SELECT COUNT(*) FROM {TABLE} WHERE {clause}"));
    QueryTemplateSet::new(
        vec![
            t("C1", "sex = {sex}").weighted(2.0),
            t("C2", "education = {education}").weighted(2.0),
            t("C3", "workclass = {workclass}"),
            t("C4", "age > {age}"),
            t("C5", "sex = {sex} AND education = {education}"),
            t("C6", "native-country = {native-country}"),
            t("C7", "occupation = {occupation}"),
            t("C8", "age < {age} AND sex = {sex}"),
        ],
        pools,
    )
    .with_workflows(vec![
        Workflow::new("A", ["C1", "C2", "C5"]),
        Workflow::new("B", ["C3", "C7", "C4"]),
        Workflow::new("C", ["C6", "C1", "C8"]),
        Workflow::new("D", ["C4", "C2", "C3"]),
        Workflow::new("E", ["C7", "C5", "C6"]),
    ])
    .with_principals(["analyst"])
}

fn workflow(set: &QueryTemplateSet, w: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Step>, WorkloadError> {
    set.workflows[w]
        .steps
        .iter()
        .map(|t| {
            let sql = set.template(t).expect("known template").sample(&set.pools, rng)?;
            Ok(Step::query("analyst", sql))
        })
        .collect()
}

pub fn run_census_scenario(seed: u64) -> Result<ScenarioResult, WorkloadError> {
    run_census(&Manifest::with_seed(seed))
}

pub fn run_census(manifest: &Manifest) -> Result<ScenarioResult, WorkloadError> {
    let cfg = qi_config();
    let table = manifest.table("census")?;
    let set = census_templates(&table);
    let db = Database::new().with_table(table);

    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut norm_steps = Vec::new();
    for w in pair_cover(set.workflows.len()) {
        norm_steps.extend(workflow(&set, w, &mut rng)?);
    }
    for _ in 0..EXTRA_NORMATIVE_WORKFLOWS {
        let w = rng.gen_range(0..set.workflows.len());
        norm_steps.extend(workflow(&set, w, &mut rng)?);
    }
    let norm = replay(&db, &norm_steps, "n")?;

    // Scripts go after randomly chosen analyst workflows, in target order.
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    rng.set_stream(1);
    let mut slots: Vec<usize> = (0..TARGETS.len()).map(|_| rng.gen_range(0..RUN_WORKFLOWS)).collect();
    slots.sort_unstable();
    let scripts: Vec<Vec<String>> = TARGETS
        .iter()
        .zip(ATTACK_LENGTHS)
        .map(|(t, len)| t.script(len))
        .collect();

    let mut steps: Vec<Step> = TARGETS.iter().map(|t| Step::Mutate(t.insert())).collect();
    let mut spans = Vec::new();
    let mut queries = 0;
    let mut next_script = 0;
    for w in 0..RUN_WORKFLOWS {
        let wf = workflow(&set, rng.gen_range(0..set.workflows.len()), &mut rng)?;
        queries += wf.len();
        steps.extend(wf);
        while next_script < scripts.len() && slots[next_script] == w {
            let script = &scripts[next_script];
            spans.push((queries, queries + script.len() - 1));
            queries += script.len();
            let session = format!("insider-{}", next_script + 1);
            steps.extend(script.iter().map(|sql| Step::query(session.as_str(), sql.clone())));
            next_script += 1;
        }
    }
    let run = replay(&db, &steps, "r")?;
    let a = analyse(manifest, &cfg, &norm.queries, &norm.responses, &run.queries, &run.responses)?;

    let count_at = |i: usize| -> Option<u64> {
        run.responses.entries()[i]
            .response
            .relation()
            .and_then(|r| r.rows.first())
            .and_then(|row| row[0].parse().ok())
    };
    let mut attacks = Vec::new();
    for (i, ((target, &span), script)) in TARGETS.iter().zip(&spans).zip(&scripts).enumerate() {
        let own = TemplateLog::from_queries(&run.queries[span.0..=span.1])?.profile(manifest.n)?;
        let mismatches = compare(&own, &a.norm_ngrams)?.len();
        let ident = span.1 - SALARIES.len();
        let target_count = count_at(ident);
        let probes: Vec<Option<u64>> = (1..=SALARIES.len()).map(|k| count_at(ident + k)).collect();
        let revealed_salary = match (target_count, probes.as_slice()) {
            (Some(1), [Some(hi), Some(lo)]) if hi + lo == 1 => Some(SALARIES[if *hi == 1 { 0 } else { 1 }].to_string()),
            _ => None,
        };
        attacks.push(AttackOutcome {
            attack: i + 1,
            target: target.description.into(),
            length: script.len(),
            span,
            target_count,
            mismatches,
            paper_mismatches: PAPER_MISMATCHES[i],
            revealed_salary,
            inserted_salary: target.salary().into(),
        });
    }
    let unattributed_mismatches = a
        .mismatches
        .missing
        .values()
        .filter(|first| !first.is_some_and(|f| spans.iter().any(|&(s, e)| (s..=e).contains(&f))))
        .count();

    let lengths: Vec<usize> = attacks.iter().map(|x| x.length).collect();
    let mut assertions = vec![Assertion::new(
        "script_lengths",
        lengths == ATTACK_LENGTHS,
        format!("{lengths:?}"),
    )];
    for x in &attacks {
        assertions.push(Assertion::new(
            &format!("attack{}_target_unique", x.attack),
            x.target_count == Some(1),
            format!("{}: count {:?}", x.target, x.target_count),
        ));
        assertions.push(Assertion::new(
            &format!("attack{}_detected", x.attack),
            x.mismatches > 0,
            format!("{} mismatching grams", x.mismatches),
        ));
        assertions.push(Assertion::new(
            &format!("attack{}_reveals_salary", x.attack),
            x.revealed_salary.as_deref() == Some(x.inserted_salary.as_str()),
            format!("revealed {:?}, inserted {}", x.revealed_salary, x.inserted_salary),
        ));
    }
    assertions.push(Assertion::new(
        "mismatches_start_within_scripts",
        unattributed_mismatches == 0,
        format!("{unattributed_mismatches} of {} outside every script", a.mismatches.len()),
    ));

    Ok(ScenarioResult {
        scenario: "census".into(),
        seed: manifest.seed,
        n: manifest.n,
        m_max: manifest.m_max,
        k_range: manifest.k_range,
        normative_queries: norm.queries.len(),
        run_queries: run.queries.len(),
        normative_privacy_limits: a.norm_privacy.len(),
        normative_ngrams: a.norm_ngrams.len(),
        normative_log: norm.queries,
        run_log: run.queries,
        qi_config: cfg,
        normative_responses: norm.responses,
        run_responses: run.responses,
        mismatches: a.mismatches,
        privacy_anomalies: a.privacy_anomalies,
        summary: Summary::Census(CensusSummary {
            attacks,
            unattributed_mismatches,
        }),
        assertions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn scripts_have_requested_lengths_and_end_with_probes() {
        for (t, len) in TARGETS.iter().zip(ATTACK_LENGTHS) {
            let s = t.script(len);
            assert_eq!(s.len(), len);
            assert!(s[len - 1].ends_with("salary = '<=50K'"));
            assert!(s[len - 2].ends_with("salary = '>50K'"));
        }
        assert_eq!(
            TARGETS[2].script(17)[14],
            "SELECT COUNT(*) FROM census WHERE age = 33 AND native-country = 'Spain'"
        );
    }

    #[test]
    fn targets_are_absent_before_insert() {
        let db = Database::new().with_table(fixtures::census());
        for t in &TARGETS {
            let q = crate::sqlabs::RawQuery::new("x", "", 0, count_sql(&t.identifying_preds()));
            assert_eq!(db.execute(&q).unwrap().rows[0][0], "0", "{}", t.description);
        }
    }

    #[test]
    fn generated_queries_execute() {
        let table = fixtures::census();
        let set = census_templates(&table);
        let db = Database::new().with_table(table);
        let log = super::super::generate_log(&set, 500, 11).unwrap();
        assert_eq!(db.run_log(&log).unwrap().len(), 500);
    }

    #[test]
    fn scenario_assertions_hold() {
        let r = run_census_scenario(7).unwrap();
        assert!(r.passed(), "{:#?}", r.first_failure());
        assert!(r.privacy_anomalies.is_empty());
    }
}
