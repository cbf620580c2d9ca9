//! Hospital audit-log scenario with 15 injected privacy anomalies.
//!
//! Doctors `dr_a` and `dr_b` run fixed three-query workflows over the four
//! benign cities. The normative log holds every ordered pair of workflows
//! per doctor, further random workflows, and a `records` principal that
//! sweeps every binding of the row-returning templates once.
//!
//! The run log first adds the `country` column, then embeds:
//! * five queries projecting `country` (category 1);
//! * ten queries over Cork and Limerick twin records, each preceded by a
//!   delete or update that leaves one twin (category 2). Two of them reuse
//!   the normative `dob`/`city` template inside an ordinary workflow; the
//!   other eight use templates never seen in training.
//!
//! Anomalies sit two workflows apart within each doctor's stream, so no
//! window covers two of them.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    analyse, pair_cover, replay, Assertion, Manifest, QueryTemplate, QueryTemplateSet, ScenarioResult, Step,
    Summary, Workflow, WorkloadError,
};
use crate::engine::{Database, Mutation};
use crate::privacy::{AnomalyReason, QiConfig};

pub const BENIGN_CITIES: [&str; 4] = ["Dublin", "Galway", "Waterford", "Kilkenny"];
const TABLE: &str = "hospitaldb";
const DOCTORS: [&str; 2] = ["dr_a", "dr_b"];
const EXTRA_NORMATIVE_WORKFLOWS: usize = 120;
const GAP_WORKFLOWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedAnomaly {
    pub query_id: String,
    pub category: u8,
    pub description: String,
    pub sql: String,
    pub rows: usize,
    pub ngram: bool,
    pub privacy: bool,
    pub reasons: BTreeSet<AnomalyReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalSummary {
    pub injected: Vec<InjectedAnomaly>,
    pub ngram_detected: usize,
    pub privacy_detected: usize,
    pub overall_detected: usize,
    pub baseline_mismatches: usize,
    pub baseline_privacy_anomalies: usize,
}

fn qi_config() -> QiConfig {
    QiConfig::new(
        ["patient_id", "e-mail_id"],
        [
            "first_name",
            "last_name",
            "status",
            "dob",
            "gender",
            "city",
            "marital_status",
            "country",
        ],
        ["diagnoses"],
    )
    .expect("static config is valid")
}

fn template_set(db: &Database) -> QueryTemplateSet {
    let table = db.table(TABLE).expect("hospital table present");
    let col = |name: &str| table.column_index(name).expect("hospital column");
    let (dob, city, diagnoses) = (col("dob"), col("city"), col("diagnoses"));
    let benign_dobs: BTreeSet<String> = table
        .rows
        .iter()
        .filter(|r| BENIGN_CITIES.contains(&r[city].as_str()))
        .map(|r| r[dob].clone())
        .collect();
    let all_diagnoses: BTreeSet<String> = table.rows.iter().map(|r| r[diagnoses].clone()).collect();
    let pools = BTreeMap::from([
        ("dob".to_string(), benign_dobs.into_iter().collect()),
        ("city".to_string(), BENIGN_CITIES.map(String::from).to_vec()),
        ("gender".to_string(), vec!["Female".to_string(), "Male".to_string()]),
        ("status".to_string(), vec!["inpatient".to_string(), "outpatient".to_string()]),
        ("diagnoses".to_string(), all_diagnoses.into_iter().collect()),
    ]);
    QueryTemplateSet::new(
        vec![
            QueryTemplate::new(
                "T1",
                "SELECT dob, city, diagnoses FROM hospitaldb WHERE dob = {dob} AND city = {city}",
            ),
            QueryTemplate::new("T2", "SELECT dob, gender, diagnoses FROM hospitaldb WHERE city = {city}"),
            QueryTemplate::new(
                "T3",
                "SELECT gender, marital_status FROM hospitaldb WHERE city = {city} AND gender = {gender}",
            ),
            QueryTemplate::new("T4", "SELECT COUNT(*) FROM hospitaldb WHERE diagnoses = {diagnoses}"),
            QueryTemplate::new(
                "T5",
                "SELECT status, dob FROM hospitaldb WHERE city = {city} AND status = {status}",
            ),
            QueryTemplate::new(
                "T6",
                "SELECT COUNT(*) FROM hospitaldb WHERE city = {city} AND gender = {gender}",
            ),
        ],
        pools,
    )
    .with_workflows(vec![
        Workflow::new("W1", ["T2", "T1", "T4"]),
        Workflow::new("W2", ["T3", "T6", "T1"]),
        Workflow::new("W3", ["T5", "T2", "T6"]),
        Workflow::new("W4", ["T4", "T3", "T5"]),
    ])
    .with_principals(DOCTORS)
}

fn workflow_steps(
    set: &QueryTemplateSet,
    workflow: usize,
    principal: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Step>, WorkloadError> {
    set.workflows[workflow]
        .steps
        .iter()
        .map(|t| {
            let sql = set.template(t).expect("known template").sample(&set.pools, rng)?;
            Ok(Step::query(principal, sql))
        })
        .collect()
}

/// Hospital table without the struck 1981 Dublin record, with `country`
/// split off for the run-time schema change.
fn base(manifest: &Manifest) -> Result<(Database, Vec<String>), WorkloadError> {
    let db = Database::new().with_table(manifest.table("hospital")?);
    let db = db.apply(&Mutation::Delete {
        table: TABLE.into(),
        predicate: [("dob", "1981"), ("city", "Dublin"), ("diagnoses", "Flu"), ("country", "Germany")]
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .to_vec(),
    })?;
    let (table, country) = db.table(TABLE).expect("hospital table present").split_column("country")?;
    Ok((Database::new().with_table(table), country))
}

fn normative_steps(set: &QueryTemplateSet, rng: &mut ChaCha8Rng) -> Result<Vec<Step>, WorkloadError> {
    use rand::Rng;
    let mut steps = Vec::new();
    for doctor in DOCTORS {
        for w in pair_cover(set.workflows.len()) {
            steps.extend(workflow_steps(set, w, doctor, rng)?);
        }
    }
    for _ in 0..EXTRA_NORMATIVE_WORKFLOWS {
        let doctor = DOCTORS[rng.gen_range(0..DOCTORS.len())];
        let w = rng.gen_range(0..set.workflows.len());
        steps.extend(workflow_steps(set, w, doctor, rng)?);
    }
    for name in ["T1", "T2", "T3", "T5"] {
        let t = set.template(name).expect("known template");
        steps.extend(t.expand_all(&set.pools)?.into_iter().map(|sql| Step::query("records", sql)));
    }
    Ok(steps)
}

enum Injection {
    /// A query with a template never seen in training.
    Novel { pre: Option<Mutation>, sql: String },
    /// A normative workflow with one step's binding replaced.
    InWorkflow {
        pre: Mutation,
        workflow: usize,
        step: usize,
        sql: String,
    },
}

struct Planned {
    category: u8,
    description: String,
    injection: Injection,
}

/// Second record of reserved twin group `group`.
fn twin_id(group: usize) -> String {
    format!("P{}", 1104 + 2 * group)
}

fn injections() -> Vec<Planned> {
    let mut out = Vec::new();
    let cat1 = [
        "SELECT diagnoses, dob, city, country FROM hospitalDB WHERE dob='1981' AND city='Dublin'",
        "SELECT diagnoses, dob, city, country FROM hospitaldb WHERE dob = '1981' AND city = 'Galway'",
        "SELECT gender, country FROM hospitaldb WHERE city = 'Waterford'",
        "SELECT country, diagnoses FROM hospitaldb WHERE city = 'Kilkenny' AND gender = 'Female'",
        "SELECT dob, status, country FROM hospitaldb WHERE city = 'Galway' AND dob = '1984'",
    ];
    for sql in cat1 {
        out.push(Planned {
            category: 1,
            description: "projects the newly added attribute country".into(),
            injection: Injection::Novel {
                pre: None,
                sql: sql.into(),
            },
        });
    }

    // (group, city, dob, delete?, query; None means T1 inside a workflow)
    let cat2: [(usize, &str, &str, bool, Option<&str>); 10] = [
        (0, "Cork", "1920", true, None),
        (1, "Cork", "1955", false, Some("SELECT first_name, last_name, diagnoses FROM hospitaldb WHERE dob = '1955' AND city = 'Cork'")),
        (2, "Cork", "1962", true, Some("SELECT dob, marital_status, diagnoses FROM hospitaldb WHERE city = 'Cork' AND dob = '1962'")),
        (3, "Cork", "1971", false, Some("SELECT gender, status, diagnoses FROM hospitaldb WHERE city = 'Cork' AND dob = '1971' AND gender = 'Female'")),
        (4, "Cork", "1990", true, Some("SELECT diagnoses FROM hospitaldb WHERE dob = '1990' AND city = 'Cork' AND marital_status = 'single'")),
        (5, "Limerick", "1933", false, Some("SELECT dob, gender, status, diagnoses FROM hospitaldb WHERE city = 'Limerick' AND status = 'inpatient' AND dob = '1933'")),
        (6, "Limerick", "1948", false, None),
        (7, "Limerick", "1967", true, Some("SELECT last_name, dob, diagnoses FROM hospitaldb WHERE city = 'Limerick' AND dob = '1967'")),
        (8, "Limerick", "1978", false, Some("SELECT marital_status, gender, diagnoses FROM hospitaldb WHERE dob = '1978' AND city = 'Limerick'")),
        (9, "Limerick", "1999", true, Some("SELECT city, dob, gender, diagnoses FROM hospitaldb WHERE dob = '1999' AND city = 'Limerick'")),
    ];
    for (group, city, dob, delete, query) in cat2 {
        let twin = twin_id(group);
        let target = vec![("patient_id".to_string(), twin.clone())];
        let (pre, what) = if delete {
            (
                Mutation::Delete {
                    table: TABLE.into(),
                    predicate: target,
                },
                format!("deleted {twin}"),
            )
        } else {
            let next = (dob.parse::<u32>().expect("numeric dob") + 1).to_string();
            (
                Mutation::Update {
                    table: TABLE.into(),
                    predicate: target,
                    set: vec![("dob".to_string(), next.clone())],
                },
                format!("updated {twin} dob to {next}"),
            )
        };
        let injection = match query {
            Some(sql) => Injection::Novel {
                pre: Some(pre),
                sql: sql.into(),
            },
            None => {
                let sql = format!("SELECT dob, city, diagnoses FROM hospitaldb WHERE dob = '{dob}' AND city = '{city}'");
                // W1 has T1 second, W2 has it last.
                let (workflow, step) = if group == 0 { (0, 1) } else { (1, 2) };
                Injection::InWorkflow {
                    pre,
                    workflow,
                    step,
                    sql,
                }
            }
        };
        let context = if query.is_some() { "new template" } else { "normative template in workflow" };
        out.push(Planned {
            category: 2,
            description: format!("{city} {dob} twin {what}; singleton response, {context}"),
            injection,
        });
    }
    out
}

/// Run-log steps and, per injected anomaly, the index of its query.
fn run_steps(
    set: &QueryTemplateSet,
    planned: &[Planned],
    rng: &mut ChaCha8Rng,
    country: &[String],
) -> Result<(Vec<Step>, Vec<usize>), WorkloadError> {
    use rand::Rng;
    let mut steps = Vec::new();
    let mut positions = Vec::new();
    let mut queries = 0usize;
    let mut push = |steps: &mut Vec<Step>, s: Step| {
        if matches!(s, Step::Query { .. }) {
            queries += 1;
        }
        steps.push(s);
        queries
    };
    push(
        &mut steps,
        Step::Mutate(Mutation::AddColumn {
            table: TABLE.into(),
            column: "country".into(),
            values: country.to_vec(),
        }),
    );
    let slots = planned.len().max(5);
    for slot in 0..slots + DOCTORS.len() {
        let doctor = DOCTORS[slot % DOCTORS.len()];
        for _ in 0..GAP_WORKFLOWS {
            let w = rng.gen_range(0..set.workflows.len());
            for s in workflow_steps(set, w, doctor, rng)? {
                push(&mut steps, s);
            }
        }
        let Some(p) = planned.get(slot) else { continue };
        match &p.injection {
            Injection::Novel { pre, sql } => {
                if let Some(m) = pre {
                    push(&mut steps, Step::Mutate(m.clone()));
                }
                positions.push(push(&mut steps, Step::query(doctor, sql.clone())) - 1);
            }
            Injection::InWorkflow {
                pre,
                workflow,
                step,
                sql,
            } => {
                push(&mut steps, Step::Mutate(pre.clone()));
                let mut wf = workflow_steps(set, *workflow, doctor, rng)?;
                wf[*step] = Step::query(doctor, sql.clone());
                for (i, s) in wf.into_iter().enumerate() {
                    let n = push(&mut steps, s);
                    if i == *step {
                        positions.push(n - 1);
                    }
                }
            }
        }
    }
    Ok((steps, positions))
}

pub fn run_hospital_scenario(seed: u64) -> Result<ScenarioResult, WorkloadError> {
    run_hospital(&Manifest::with_seed(seed))
}

/// Same workload with nothing injected.
pub fn run_hospital_baseline(manifest: &Manifest) -> Result<ScenarioResult, WorkloadError> {
    simulate(manifest, false)
}

pub fn run_hospital(manifest: &Manifest) -> Result<ScenarioResult, WorkloadError> {
    let mut result = simulate(manifest, true)?;
    let baseline = simulate(manifest, false)?;
    let Summary::Hospital(s) = &mut result.summary else { unreachable!() };
    s.baseline_mismatches = baseline.mismatches.len();
    s.baseline_privacy_anomalies = baseline.privacy_anomalies.len();

    let cat1: Vec<&InjectedAnomaly> = s.injected.iter().filter(|a| a.category == 1).collect();
    let cat1_both = cat1.iter().filter(|a| a.ngram && a.privacy).count();
    let singleton = s
        .injected
        .iter()
        .find(|a| a.sql.contains("dob = '1920' AND city = 'Cork'"))
        .expect("planned anomaly");
    result.assertions = vec![
        Assertion::new(
            "category1_flagged_by_both",
            cat1.len() == 5 && cat1_both == 5,
            format!("{cat1_both}/{} flagged by both detectors", cat1.len()),
        ),
        Assertion::new(
            "singleton_flagged_by_privacy_only",
            singleton.rows == 1 && singleton.privacy && !singleton.ngram,
            format!(
                "{} row(s), privacy={}, ngram={}",
                singleton.rows, singleton.privacy, singleton.ngram
            ),
        ),
        Assertion::new(
            "overall_detected_at_least_13_of_15",
            s.injected.len() == 15 && s.overall_detected >= 13,
            format!(
                "overall {}/{} (n-gram {}, privacy {})",
                s.overall_detected,
                s.injected.len(),
                s.ngram_detected,
                s.privacy_detected
            ),
        ),
        Assertion::new(
            "baseline_has_no_flags",
            baseline.mismatches.is_empty() && baseline.privacy_anomalies.is_empty(),
            format!(
                "{} n-gram mismatches, {} privacy anomalies",
                baseline.mismatches.len(),
                baseline.privacy_anomalies.len()
            ),
        ),
    ];
    Ok(result)
}

fn simulate(manifest: &Manifest, inject: bool) -> Result<ScenarioResult, WorkloadError> {
    let cfg = qi_config();
    let (db, country) = base(manifest)?;
    let set = template_set(&db);

    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let norm = replay(&db, &normative_steps(&set, &mut rng)?, "n")?;

    let planned = if inject { injections() } else { Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    rng.set_stream(1);
    let (steps, positions) = run_steps(&set, &planned, &mut rng, &country)?;
    let run = replay(&db, &steps, "r")?;

    let a = analyse(manifest, &cfg, &norm.queries, &norm.responses, &run.queries, &run.responses)?;
    let flagged = a.run_templates.flagged_positions(&a.norm_ngrams);

    let injected: Vec<InjectedAnomaly> = planned
        .iter()
        .zip(&positions)
        .map(|(p, &pos)| {
            let entry = &run.responses.entries()[pos];
            let reasons: BTreeSet<AnomalyReason> = a
                .privacy_anomalies
                .iter()
                .filter(|x| x.query_id.as_deref() == Some(entry.query.id.as_str()))
                .map(|x| x.reason)
                .collect();
            InjectedAnomaly {
                query_id: entry.query.id.clone(),
                category: p.category,
                description: p.description.clone(),
                sql: entry.query.sql.clone(),
                rows: entry.response.relation().map_or(0, |r| r.rows.len()),
                ngram: flagged.contains(&pos),
                privacy: !reasons.is_empty(),
                reasons,
            }
        })
        .collect();
    let count = |f: fn(&InjectedAnomaly) -> bool| injected.iter().filter(|a| f(a)).count();
    let summary = HospitalSummary {
        ngram_detected: count(|a| a.ngram),
        privacy_detected: count(|a| a.privacy),
        overall_detected: count(|a| a.ngram || a.privacy),
        injected,
        baseline_mismatches: 0,
        baseline_privacy_anomalies: 0,
    };
    let assertions = if inject {
        Vec::new()
    } else {
        vec![Assertion::new(
            "no_flags_without_injection",
            a.mismatches.is_empty() && a.privacy_anomalies.is_empty(),
            format!(
                "{} n-gram mismatches, {} privacy anomalies",
                a.mismatches.len(),
                a.privacy_anomalies.len()
            ),
        )]
    };

    Ok(ScenarioResult {
        scenario: "hospital".into(),
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
        summary: Summary::Hospital(summary),
        assertions,
    })
}
