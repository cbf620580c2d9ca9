//! Synthetic query workloads and the three scripted scenarios.
//!
//! Templates are SQL strings with `{attr}` slots filled from per-attribute
//! value pools. A template set may also group templates into workflows,
//! fixed sequences a principal issues back to back.

mod census;
mod differencing;
mod hospital;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{load_csv, Database, EngineError, LogEntry, Mutation, Response, ResponseLog, Table};
use crate::fixtures;
use crate::ngram::{compare, MismatchReport, NGramError, NGramProfile, TemplateLog};
use crate::privacy::{detect_log, mine_profile, MiningParams, PrivacyAnomaly, PrivacyError, PrivacyProfile, QiConfig};
use crate::sqlabs::{self, LogError, RawQuery, SyntaxError};

pub use census::{census_templates, run_census, run_census_scenario, AttackOutcome, CensusSummary, ATTACK_LENGTHS, PAPER_MISMATCHES};
pub use differencing::{run_differencing, run_differencing_scenario, DifferencingSummary, QueryOutcome};
pub use hospital::{
    run_hospital, run_hospital_baseline, run_hospital_scenario, HospitalSummary, InjectedAnomaly, BENIGN_CITIES,
};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("template `{template}`: {message}")]
    Template { template: String, message: String },
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    NGram(#[from] NGramError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("unknown scenario `{0}` (expected hospital, differencing or census)")]
    UnknownScenario(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub name: String,
    pub sql: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl QueryTemplate {
    pub fn new(name: impl Into<String>, sql: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            sql: sql.into(),
            weight: 1.0,
        }
    }

    pub fn weighted(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = self.sql.as_str();
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}') else { break };
            let name = &rest[open + 1..open + close];
            if !out.iter().any(|s| s == name) {
                out.push(name.to_string());
            }
            rest = &rest[open + close + 1..];
        }
        out
    }

    pub fn fill(&self, binding: &BTreeMap<String, String>) -> String {
        let mut sql = self.sql.clone();
        for (slot, value) in binding {
            sql = sql.replace(&format!("{{{slot}}}"), &sql_literal(value));
        }
        sql
    }

    /// Every instantiation over the cartesian product of the slot pools.
    pub fn expand_all(&self, pools: &BTreeMap<String, Vec<String>>) -> Result<Vec<String>, WorkloadError> {
        let slots = self.slots();
        if slots.is_empty() {
            return Ok(vec![self.sql.clone()]);
        }
        let pools: Vec<&Vec<String>> = slots
            .iter()
            .map(|s| self.pool(pools, s))
            .collect::<Result<_, _>>()?;
        Ok(pools
            .into_iter()
            .map(|p| p.iter())
            .multi_cartesian_product()
            .map(|values| {
                let binding = slots.iter().cloned().zip(values.into_iter().cloned()).collect();
                self.fill(&binding)
            })
            .collect())
    }

    fn pool<'a>(&self, pools: &'a BTreeMap<String, Vec<String>>, slot: &str) -> Result<&'a Vec<String>, WorkloadError> {
        match pools.get(slot) {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(WorkloadError::Template {
                template: self.name.clone(),
                message: format!("no values for slot `{slot}`"),
            }),
        }
    }

    fn sample(&self, pools: &BTreeMap<String, Vec<String>>, rng: &mut ChaCha8Rng) -> Result<String, WorkloadError> {
        let mut binding = BTreeMap::new();
        for slot in self.slots() {
            let value = self.pool(pools, &slot)?.choose(rng).expect("pool is nonempty");
            binding.insert(slot, value.clone());
        }
        Ok(self.fill(&binding))
    }
}

/// Numbers are emitted bare, everything else single-quoted.
pub fn sql_literal(value: &str) -> String {
    if value.parse::<f64>().is_ok_and(f64::is_finite) {
        value.to_string()
    } else {
        format!("'{}'", value.replace('\'', "''"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub name: String,
    pub steps: Vec<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl Workflow {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(name: impl Into<String>, steps: I) -> Self {
        Self {
            name: name.into(),
            steps: steps.into_iter().map(Into::into).collect(),
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplateSet {
    pub templates: Vec<QueryTemplate>,
    #[serde(default)]
    pub pools: BTreeMap<String, Vec<String>>,
    /// When nonempty, whole workflows are sampled instead of templates.
    #[serde(default)]
    pub workflows: Vec<Workflow>,
    #[serde(default)]
    pub principals: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

impl QueryTemplateSet {
    pub fn new(templates: Vec<QueryTemplate>, pools: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            templates,
            pools,
            workflows: Vec::new(),
            principals: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_workflows(mut self, workflows: Vec<Workflow>) -> Self {
        self.workflows = workflows;
        self
    }

    pub fn with_principals<I: IntoIterator<Item = S>, S: Into<String>>(mut self, principals: I) -> Self {
        self.principals = principals.into_iter().map(Into::into).collect();
        self
    }

    pub fn template(&self, name: &str) -> Option<&QueryTemplate> {
        self.templates.iter().find(|t| t.name == name)
    }

    /// Checks weights, workflow references, pools, and that one
    /// instantiation of every template parses.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |template: &str, message: String| WorkloadError::Template {
            template: template.to_string(),
            message,
        };
        if self.templates.is_empty() {
            return Err(bad("", "template set is empty".into()));
        }
        for t in &self.templates {
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(bad(&t.name, format!("invalid weight {}", t.weight)));
            }
            let binding = t
                .slots()
                .into_iter()
                .map(|s| Ok((s.clone(), t.pool(&self.pools, &s)?[0].clone())))
                .collect::<Result<_, WorkloadError>>()?;
            sqlabs::parse(&t.fill(&binding)).map_err(|e| bad(&t.name, e.to_string()))?;
        }
        for w in &self.workflows {
            if w.steps.is_empty() {
                return Err(bad(&w.name, "workflow has no steps".into()));
            }
            if let Some(s) = w.steps.iter().find(|s| self.template(s).is_none()) {
                return Err(bad(&w.name, format!("unknown template `{s}`")));
            }
        }
        Ok(())
    }

    fn principal(&self, rng: &mut ChaCha8Rng) -> String {
        self.principals
            .choose(rng)
            .cloned()
            .unwrap_or_else(|| "user".to_string())
    }
}

/// Draws `count` queries. Templates (or workflows, when the set defines any)
/// are picked by weight; each workflow goes to one principal. Ids are
/// `q0, q1, ...` and timestamps one second apart.
pub fn generate_log(set: &QueryTemplateSet, count: usize, seed: u64) -> Result<Vec<RawQuery>, WorkloadError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    set.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sql: Vec<(String, String)> = Vec::with_capacity(count);
    if set.workflows.is_empty() {
        let dist = weights(set.templates.iter().map(|t| (t.name.as_str(), t.weight)))?;
        while sql.len() < count {
            let principal = set.principal(&mut rng);
            let t = &set.templates[dist.sample(&mut rng)];
            sql.push((principal, t.sample(&set.pools, &mut rng)?));
        }
    } else {
        let dist = weights(set.workflows.iter().map(|w| (w.name.as_str(), w.weight)))?;
        while sql.len() < count {
            let principal = set.principal(&mut rng);
            let w = &set.workflows[dist.sample(&mut rng)];
            for step in w.steps.iter().take(count - sql.len()) {
                let t = set.template(step).expect("validated");
                sql.push((principal.clone(), t.sample(&set.pools, &mut rng)?));
            }
        }
    }
    Ok(sql
        .into_iter()
        .enumerate()
        .map(|(i, (p, s))| RawQuery::new(format!("q{i}"), p, i as i64 * 1000, s))
        .collect())
}

fn weights<'a>(items: impl Iterator<Item = (&'a str, f64)>) -> Result<WeightedIndex<f64>, WorkloadError> {
    let (names, w): (Vec<&str>, Vec<f64>) = items.unzip();
    WeightedIndex::new(&w).map_err(|e| WorkloadError::Template {
        template: names.join(","),
        message: format!("weights: {e}"),
    })
}

/// Workflow order in which every ordered pair of workflows occurs as
/// neighbours, so any window spanning at most two workflows is covered.
pub fn pair_cover(workflows: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * workflows * workflows);
    for a in 0..workflows {
        for b in 0..workflows {
            out.push(a);
            out.push(b);
        }
    }
    out
}

/// One element of a scripted run: a query or a data change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Query { principal: String, sql: String },
    Mutate(Mutation),
}

impl Step {
    pub fn query(principal: impl Into<String>, sql: impl Into<String>) -> Self {
        Step::Query {
            principal: principal.into(),
            sql: sql.into(),
        }
    }
}

/// Result of executing a step list: queries get ids `{prefix}{i}` and
/// timestamps one second apart, in step order.
#[derive(Debug, Clone)]
pub struct Replay {
    pub queries: Vec<RawQuery>,
    pub responses: ResponseLog,
    pub database: Database,
}

pub fn replay(db: &Database, steps: &[Step], prefix: &str) -> Result<Replay, WorkloadError> {
    let mut database = db.clone();
    let mut queries = Vec::new();
    let mut entries = Vec::new();
    for step in steps {
        match step {
            Step::Mutate(m) => database = database.apply(m)?,
            Step::Query { principal, sql } => {
                let i = queries.len();
                let q = RawQuery::new(format!("{prefix}{i}"), principal.clone(), i as i64 * 1000, sql.clone());
                let rel = database.execute(&q)?;
                entries.push(LogEntry {
                    query: q.clone(),
                    response: Response::Rows(rel),
                });
                queries.push(q);
            }
        }
    }
    Ok(Replay {
        queries,
        responses: ResponseLog::from_entries(entries),
        database,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Summary {
    Hospital(HospitalSummary),
    Differencing(DifferencingSummary),
    Census(CensusSummary),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub m_max: usize,
    pub k_range: (usize, usize),
    #[serde(skip)]
    pub normative_log: Vec<RawQuery>,
    #[serde(skip)]
    pub run_log: Vec<RawQuery>,
    #[serde(skip)]
    pub qi_config: QiConfig,
    #[serde(skip)]
    pub normative_responses: ResponseLog,
    #[serde(skip)]
    pub run_responses: ResponseLog,
    pub normative_queries: usize,
    pub run_queries: usize,
    pub normative_privacy_limits: usize,
    pub normative_ngrams: usize,
    pub mismatches: MismatchReport,
    pub privacy_anomalies: Vec<PrivacyAnomaly>,
    pub summary: Summary,
    pub assertions: Vec<Assertion>,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn first_failure(&self) -> Option<&Assertion> {
        self.assertions.iter().find(|a| !a.passed)
    }

    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }
}

/// Both profiles of a normative log and the detections on a run log.
struct Analysis {
    norm_privacy: PrivacyProfile,
    norm_ngrams: NGramProfile,
    run_templates: TemplateLog,
    mismatches: MismatchReport,
    privacy_anomalies: Vec<PrivacyAnomaly>,
}

fn analyse(
    manifest: &Manifest,
    cfg: &QiConfig,
    norm_queries: &[RawQuery],
    norm_responses: &ResponseLog,
    run_queries: &[RawQuery],
    run_responses: &ResponseLog,
) -> Result<Analysis, WorkloadError> {
    let params = manifest.mining_params()?;
    let norm_privacy = mine_profile(norm_responses, cfg, &params);
    let norm_ngrams = TemplateLog::from_queries(norm_queries)?.profile(manifest.n)?;
    let run_templates = TemplateLog::from_queries(run_queries)?;
    let mismatches = compare(&run_templates.profile(manifest.n)?, &norm_ngrams)?;
    let privacy_anomalies = detect_log(run_responses, &norm_privacy, cfg, manifest.m_max);
    Ok(Analysis {
        norm_privacy,
        norm_ngrams,
        run_templates,
        mismatches,
        privacy_anomalies,
    })
}

fn default_n() -> usize {
    4
}
fn default_m_max() -> usize {
    3
}
fn default_k_range() -> (usize, usize) {
    (1, 1000)
}

/// Contents of `scenario.json`. Fixture paths override the bundled tables,
/// keyed by `temp_table`, `updated_table_smp`, `hospital` or `census`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub fixtures: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_k_range")]
    pub k_range: (usize, usize),
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            fixtures: BTreeMap::new(),
            seed: 0,
            n: default_n(),
            m_max: default_m_max(),
            k_range: default_k_range(),
        }
    }
}

impl Manifest {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Relative fixture paths resolve against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::Manifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Relative fixture paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, WorkloadError> {
        let mut m: Manifest = serde_json::from_str(text).map_err(|e| WorkloadError::Manifest(e.to_string()))?;
        for p in m.fixtures.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.n == 0 {
            return Err(WorkloadError::NGram(NGramError::InvalidN(0)));
        }
        self.mining_params()?;
        if let Some(k) = self.fixtures.keys().find(|k| !FIXTURE_NAMES.contains(&k.as_str())) {
            return Err(WorkloadError::Manifest(format!("unknown fixture `{k}`")));
        }
        Ok(())
    }

    pub fn mining_params(&self) -> Result<MiningParams, WorkloadError> {
        Ok(MiningParams::new(self.m_max, self.k_range.0, self.k_range.1)?)
    }

    pub fn table(&self, name: &str) -> Result<Table, WorkloadError> {
        let (bundled, table_name): (fn() -> Table, &str) = match name {
            "temp_table" => (fixtures::temp_table, "temp_table"),
            "updated_table_smp" => (fixtures::updated_table_smp, "updated_table_smp"),
            "hospital" => (fixtures::hospital, "hospitaldb"),
            "census" => (fixtures::census, "census"),
            other => return Err(WorkloadError::Manifest(format!("unknown fixture `{other}`"))),
        };
        match self.fixtures.get(name) {
            Some(path) => Ok(load_csv(path, table_name)?),
            None => Ok(bundled()),
        }
    }
}

const FIXTURE_NAMES: [&str; 4] = ["temp_table", "updated_table_smp", "hospital", "census"];

pub const SCENARIOS: [&str; 3] = ["hospital", "differencing", "census"];

pub fn run_scenario(name: &str, manifest: &Manifest) -> Result<ScenarioResult, WorkloadError> {
    manifest.validate()?;
    match name {
        "hospital" => run_hospital(manifest),
        "differencing" => run_differencing(manifest),
        "census" => run_census(manifest),
        other => Err(WorkloadError::UnknownScenario(other.to_string())),
    }
}
