//! Differencing attack against a k-anonymity enforcement gate.
//!
//! The gate blocks a query that singles out the Rennes resident, yet the
//! full salary column and the salaries of every other city are both
//! released. Their multiset difference is the blocked salary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{analyse, replay, Assertion, Manifest, ScenarioResult, Step, Summary, WorkloadError};
use crate::engine::{Database, Response};
use crate::privacy::{mine_profile, Guard, QiConfig, SuppressionReason};
use crate::sqlabs::RawQuery;

const TABLE: &str = "updated_table_smp";

const NORMATIVE: [&str; 5] = [
    "SELECT maritalstatus, age, salary FROM updated_table_smp WHERE city = 'Cork'",
    "SELECT maritalstatus, age FROM updated_table_smp WHERE city = 'London'",
    "SELECT maritalstatus, age FROM updated_table_smp WHERE city = 'New York'",
    "SELECT city, age, salary FROM updated_table_smp WHERE maritalstatus = 'Single'",
    "SELECT city, maritalstatus FROM updated_table_smp WHERE age = '[30 - 40]'",
];

const Q1: &str = "SELECT Salary FROM updated_table_smp WHERE city = 'Rennes';";
const Q2: &str = "SELECT Salary FROM updated_table_smp;";
const Q3: &str = "SELECT MaritalStatus, Salary, Age FROM updated_table_smp \
                  WHERE City = 'New York' OR city = 'London' OR city = 'Cork';";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    pub sql: String,
    pub suppressed: bool,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<SuppressionReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferencingSummary {
    pub queries: Vec<QueryOutcome>,
    /// Multiset difference of the Q2 and Q3 salary columns.
    pub residual: Vec<String>,
    /// Whom the adversary links the residual to, from knowing that Simon
    /// lives in Rennes.
    pub attributed_to: Option<String>,
    pub actual_salary: Option<String>,
}

fn qi_config() -> QiConfig {
    QiConfig::new(["name"], ["maritalstatus", "city", "age"], ["salary"]).expect("static config is valid")
}

pub fn run_differencing_scenario() -> Result<ScenarioResult, WorkloadError> {
    run_differencing(&Manifest::default())
}

pub fn run_differencing(manifest: &Manifest) -> Result<ScenarioResult, WorkloadError> {
    let db = Database::new().with_table(manifest.table(TABLE)?);
    let cfg = qi_config();

    let norm_steps: Vec<Step> = NORMATIVE.iter().map(|s| Step::query("analyst", *s)).collect();
    let norm = replay(&db, &norm_steps, "n")?;

    let run_queries: Vec<RawQuery> = [Q1, Q2, Q3]
        .iter()
        .enumerate()
        .map(|(i, sql)| RawQuery::new(format!("Q{}", i + 1), "adversary", i as i64 * 1000, *sql))
        .collect();

    let norm_privacy = mine_profile(&norm.responses, &cfg, &manifest.mining_params()?);
    let mut guard = Guard::new(norm_privacy, cfg.clone(), manifest.m_max);
    let mut outcomes = Vec::new();
    for q in &run_queries {
        let d = guard.submit(&db, q)?;
        outcomes.push(QueryOutcome {
            id: q.id.clone(),
            sql: q.sql.clone(),
            suppressed: d.response.is_suppressed(),
            rows: d.response.relation().map_or(0, |r| r.rows.len()),
            reason: d.reason,
        });
    }
    let released = guard.into_log();
    let salaries = |i: usize| -> Vec<String> {
        match &released.entries()[i].response {
            Response::Rows(r) => r
                .column_values("salary")
                .map(|v| v.into_iter().map(str::to_string).collect())
                .unwrap_or_default(),
            Response::Suppressed => Vec::new(),
        }
    };
    let residual = multiset_difference(&salaries(1), &salaries(2));

    // Ground truth from the table, to check the adversary's inference.
    let truth = db.execute(&RawQuery::new("truth", "", 0, "SELECT name, salary FROM updated_table_smp WHERE city = 'Rennes'"))?;
    let (attributed_to, actual_salary) = match truth.rows.as_slice() {
        [row] if residual.len() == 1 => (Some(row[0].clone()), Some(row[1].clone())),
        _ => (None, None),
    };

    // Detection runs on the unguarded responses, so Q1's violation is listed.
    let executed = db.run_log(&run_queries)?;
    let full = analyse(manifest, &cfg, &norm.queries, &norm.responses, &run_queries, &executed)?;

    let assertions = vec![
        Assertion::new("q1_suppressed", outcomes[0].suppressed, format!("{:?}", outcomes[0].reason)),
        Assertion::new(
            "q2_released_14_rows",
            !outcomes[1].suppressed && outcomes[1].rows == 14,
            format!("{} rows", outcomes[1].rows),
        ),
        Assertion::new(
            "q3_released_13_rows",
            !outcomes[2].suppressed && outcomes[2].rows == 13,
            format!("{} rows", outcomes[2].rows),
        ),
        Assertion::new("residual_is_150k", residual == ["150k"], format!("{residual:?}")),
        Assertion::new(
            "residual_matches_rennes_record",
            attributed_to.as_deref() == Some("Simon") && actual_salary.as_deref() == residual.first().map(String::as_str),
            format!("{attributed_to:?} earns {actual_salary:?}"),
        ),
    ];

    Ok(ScenarioResult {
        scenario: "differencing".into(),
        seed: manifest.seed,
        n: manifest.n,
        m_max: manifest.m_max,
        k_range: manifest.k_range,
        normative_queries: norm.queries.len(),
        run_queries: run_queries.len(),
        normative_privacy_limits: full.norm_privacy.len(),
        normative_ngrams: full.norm_ngrams.len(),
        normative_log: norm.queries,
        run_log: run_queries,
        qi_config: cfg,
        normative_responses: norm.responses,
        run_responses: executed,
        mismatches: full.mismatches,
        privacy_anomalies: full.privacy_anomalies,
        summary: Summary::Differencing(DifferencingSummary {
            queries: outcomes,
            residual,
            attributed_to,
            actual_salary,
        }),
        assertions,
    })
}

/// `a − b` with multiplicities, sorted.
fn multiset_difference(a: &[String], b: &[String]) -> Vec<String> {
    let mut counts: BTreeMap<&str, isize> = BTreeMap::new();
    for v in a {
        *counts.entry(v).or_default() += 1;
    }
    for v in b {
        *counts.entry(v).or_default() -= 1;
    }
    counts
        .into_iter()
        .flat_map(|(v, c)| std::iter::repeat(v.to_string()).take(c.max(0) as usize))
        .collect()
}
