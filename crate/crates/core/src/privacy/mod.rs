//! k-anonymity privacy limits: mining, subsumption, detection and
//! enforcement.
//!
//! A privacy limit `[[k, q]]` records that, for the quasi-identifier set `q`,
//! released rows never fell into an equivalence class smaller than `k`. A
//! profile keeps one limit per `q`, holding the minimum `k` seen.

mod guard;
mod mining;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use guard::{enforce, Decision, Guard, SuppressionReason};
pub use mining::{compute_k, disclosed_view, entry_limits, mine_profile};

pub type AttrSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrivacyError {
    #[error("invalid attribute configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid mining parameters: {0}")]
    InvalidParams(String),
}

/// Role assignment of attributes. The three sets are pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QiConfig {
    #[serde(default)]
    pub identifiers: AttrSet,
    #[serde(default)]
    pub quasi_identifiers: AttrSet,
    #[serde(default)]
    pub sensitive: AttrSet,
}

impl QiConfig {
    pub fn new<I, Q, S>(identifiers: I, quasi_identifiers: Q, sensitive: S) -> Result<Self, PrivacyError>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
        Q: IntoIterator,
        Q::Item: AsRef<str>,
        S: IntoIterator,
        S::Item: AsRef<str>,
    {
        let lower = |it: &mut dyn Iterator<Item = String>| it.map(|s| s.to_lowercase()).collect::<AttrSet>();
        let cfg = Self {
            identifiers: lower(&mut identifiers.into_iter().map(|s| s.as_ref().to_string())),
            quasi_identifiers: lower(&mut quasi_identifiers.into_iter().map(|s| s.as_ref().to_string())),
            sensitive: lower(&mut sensitive.into_iter().map(|s| s.as_ref().to_string())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lower-cases every name and checks disjointness.
    pub fn normalized(self) -> Result<Self, PrivacyError> {
        Self::new(self.identifiers, self.quasi_identifiers, self.sensitive)
    }

    pub fn validate(&self) -> Result<(), PrivacyError> {
        let pairs = [
            ("identifiers", &self.identifiers, "quasi_identifiers", &self.quasi_identifiers),
            ("identifiers", &self.identifiers, "sensitive", &self.sensitive),
            ("quasi_identifiers", &self.quasi_identifiers, "sensitive", &self.sensitive),
        ];
        for (na, a, nb, b) in pairs {
            if let Some(x) = a.intersection(b).next() {
                return Err(PrivacyError::InvalidConfig(format!(
                    "`{x}` is listed in both {na} and {nb}"
                )));
            }
        }
        Ok(())
    }
}

/// Subset-size cap and accepted `k` range used when mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningParams {
    pub m_max: usize,
    pub k_lo: usize,
    pub k_hi: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            m_max: 3,
            k_lo: 1,
            k_hi: 1000,
        }
    }
}

impl MiningParams {
    pub fn new(m_max: usize, k_lo: usize, k_hi: usize) -> Result<Self, PrivacyError> {
        let p = Self { m_max, k_lo, k_hi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PrivacyError> {
        if self.m_max < 1 {
            return Err(PrivacyError::InvalidParams("m_max must be at least 1".into()));
        }
        if self.k_lo > self.k_hi {
            return Err(PrivacyError::InvalidParams(format!(
                "k range {}:{} is empty",
                self.k_lo, self.k_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrivacyLimit {
    pub k: usize,
    pub q: AttrSet,
}

impl PrivacyLimit {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(k: usize, q: I) -> Self {
        Self {
            k,
            q: q.into_iter().map(|s| s.as_ref().to_lowercase()).collect(),
        }
    }
}

impl fmt::Display for PrivacyLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q: Vec<&str> = self.q.iter().map(String::as_str).collect();
        write!(f, "[[{}, {{{}}}]]", self.k, q.join(", "))
    }
}

/// `a ⪯ b`: imposing `b` instead of `a` loses no privacy.
pub fn subsumes(a: &PrivacyLimit, b: &PrivacyLimit) -> bool {
    a.q.is_subset(&b.q) && b.k >= a.k
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Mined {
    k: usize,
    source: Option<String>,
}

/// One limit per quasi-identifier set. Each limit optionally remembers which
/// query produced its minimum.
#[derive(Debug, Clone, Default)]
pub struct PrivacyProfile {
    limits: BTreeMap<AttrSet, Mined>,
}

impl PartialEq for PrivacyProfile {
    fn eq(&self, other: &Self) -> bool {
        self.limits.len() == other.limits.len() && self.limits().eq(other.limits())
    }
}

impl Eq for PrivacyProfile {}

impl PrivacyProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_limits<I: IntoIterator<Item = PrivacyLimit>>(limits: I) -> Self {
        let mut p = Self::new();
        for l in limits {
            p.observe(l.q, l.k, None);
        }
        p
    }

    /// Keeps the smaller of the current and observed `k` for `q`.
    pub fn observe(&mut self, q: AttrSet, k: usize, source: Option<&str>) {
        match self.limits.get_mut(&q) {
            Some(cur) if k < cur.k => {
                *cur = Mined {
                    k,
                    source: source.map(str::to_string),
                }
            }
            Some(_) => {}
            None => {
                self.limits.insert(
                    q,
                    Mined {
                        k,
                        source: source.map(str::to_string),
                    },
                );
            }
        }
    }

    /// Per-`q` minimum of two profiles. Associative and commutative on limits.
    pub fn merge(&mut self, other: &PrivacyProfile) {
        for (q, m) in &other.limits {
            self.observe(q.clone(), m.k, m.source.as_deref());
        }
    }

    pub fn retain_k_range(&mut self, k_lo: usize, k_hi: usize) {
        self.limits.retain(|_, m| (k_lo..=k_hi).contains(&m.k));
    }

    pub fn get(&self, q: &AttrSet) -> Option<PrivacyLimit> {
        self.limits.get(q).map(|m| PrivacyLimit { k: m.k, q: q.clone() })
    }

    pub fn source_of(&self, q: &AttrSet) -> Option<&str> {
        self.limits
            .get(q)
            .and_then(|m| m.source.as_deref())
    }

    /// Limits sorted by `q`.
    pub fn limits(&self) -> impl Iterator<Item = PrivacyLimit> + '_ {
        self.limits.iter().map(|(q, m)| PrivacyLimit { k: m.k, q: q.clone() })
    }

    pub fn len(&self) -> usize {
        self.limits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limits.is_empty()
    }
}

/// Profile file: `{config, limits: [{k, q}]}` with `q` and limits sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub config: QiConfig,
    pub limits: Vec<PrivacyLimit>,
}

impl ProfileFile {
    pub fn new(config: &QiConfig, profile: &PrivacyProfile) -> Self {
        Self {
            config: config.clone(),
            limits: profile.limits().collect(),
        }
    }

    pub fn profile(&self) -> PrivacyProfile {
        PrivacyProfile::from_limits(self.limits.iter().cloned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnomalyReason {
    /// No normative limit covers any subset of the run-time `q`.
    #[serde(rename = "NO_REFERENCE")]
    NoReference,
    /// Every applicable normative limit demands a larger `k`.
    #[serde(rename = "K_BELOW_NORM")]
    KBelowNorm,
}

/// A run-time limit no normative limit subsumes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrivacyAnomaly {
    pub query_id: Option<String>,
    pub q: AttrSet,
    pub k_run: usize,
    pub k_norm: Option<usize>,
    /// `q` of the normative limit reported in `k_norm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_norm: Option<AttrSet>,
    pub reason: AnomalyReason,
}

impl PrivacyAnomaly {
    pub fn run_limit(&self) -> PrivacyLimit {
        PrivacyLimit {
            k: self.k_run,
            q: self.q.clone(),
        }
    }
}

/// Checks a single run-time limit. Returns `None` when some normative limit
/// subsumes it.
pub fn check_limit(run: &PrivacyLimit, norm: &PrivacyProfile) -> Option<(AnomalyReason, Option<PrivacyLimit>)> {
    let candidates: Vec<PrivacyLimit> = norm.limits().filter(|a| a.q.is_subset(&run.q)).collect();
    if candidates.iter().any(|a| subsumes(a, run)) {
        return None;
    }
    if candidates.is_empty() {
        return Some((AnomalyReason::NoReference, None));
    }
    // Same q if present, else the most permissive applicable floor.
    let nearest = candidates
        .iter()
        .find(|a| a.q == run.q)
        .or_else(|| {
            candidates
                .iter()
                .min_by(|x, y| x.k.cmp(&y.k).then(y.q.len().cmp(&x.q.len())).then(x.q.cmp(&y.q)))
        })
        .cloned();
    Some((AnomalyReason::KBelowNorm, nearest))
}

/// Run-time limits not subsumed by any normative limit, sorted by `q`.
pub fn detect(run: &PrivacyProfile, norm: &PrivacyProfile) -> Vec<PrivacyAnomaly> {
    run.limits()
        .filter_map(|b| {
            let (reason, nearest) = check_limit(&b, norm)?;
            Some(PrivacyAnomaly {
                query_id: run.source_of(&b.q).map(str::to_string),
                k_norm: nearest.as_ref().map(|a| a.k),
                q_norm: nearest.map(|a| a.q),
                q: b.q,
                k_run: b.k,
                reason,
            })
        })
        .collect()
}

/// Per-response detection: each response is mined on its own (no `k`
/// range filter) and checked against `norm`.
pub fn detect_log(
    run: &crate::engine::ResponseLog,
    norm: &PrivacyProfile,
    cfg: &QiConfig,
    m_max: usize,
) -> Vec<PrivacyAnomaly> {
    run.entries()
        .iter()
        .flat_map(|e| detect(&entry_limits(e, cfg, m_max), norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim(k: usize, q: &[&str]) -> PrivacyLimit {
        PrivacyLimit::new(k, q.iter().copied())
    }

    #[test]
    fn subsumption_examples() {
        assert!(subsumes(&lim(3, &["age", "zipcode"]), &lim(5, &["age", "zipcode"])));
        assert!(subsumes(&lim(3, &["age"]), &lim(3, &["age"])));
        assert!(!subsumes(&lim(3, &["age", "zipcode"]), &lim(2, &["age", "zipcode"])));
        assert!(subsumes(&lim(2, &["age"]), &lim(4, &["age", "zipcode"])));
        assert!(!subsumes(&lim(2, &["age", "zipcode"]), &lim(4, &["age"])));
    }

    #[test]
    fn detection_examples() {
        let norm = PrivacyProfile::from_limits([lim(3, &["age", "zipcode"])]);
        let run = PrivacyProfile::from_limits([lim(5, &["age", "zipcode"])]);
        assert!(detect(&run, &norm).is_empty());

        let norm = PrivacyProfile::from_limits([lim(2, &["dob", "city"])]);
        let run = PrivacyProfile::from_limits([lim(1, &["dob", "city"])]);
        let found = detect(&run, &norm);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].reason, AnomalyReason::KBelowNorm);
        assert_eq!(found[0].k_norm, Some(2));

        let run = PrivacyProfile::from_limits([lim(3, &["country"])]);
        let found = detect(&run, &norm);
        assert_eq!(found[0].reason, AnomalyReason::NoReference);
        assert_eq!(found[0].k_norm, None);
    }

    #[test]
    fn nearest_prefers_same_q_then_lowest_floor() {
        let norm = PrivacyProfile::from_limits([
            lim(4, &["dob"]),
            lim(3, &["city"]),
            lim(5, &["city", "dob"]),
        ]);
        let (_, nearest) = check_limit(&lim(1, &["city", "dob"]), &norm).unwrap();
        assert_eq!(nearest, Some(lim(5, &["city", "dob"])));
        let (_, nearest) = check_limit(&lim(1, &["city", "dob", "gender"]), &norm).unwrap();
        assert_eq!(nearest, Some(lim(3, &["city"])));
    }

    #[test]
    fn profile_keeps_minimum_and_source() {
        let mut p = PrivacyProfile::new();
        let q: AttrSet = ["age".to_string()].into();
        p.observe(q.clone(), 5, Some("q1"));
        p.observe(q.clone(), 3, Some("q2"));
        p.observe(q.clone(), 4, Some("q3"));
        assert_eq!(p.get(&q).unwrap().k, 3);
        assert_eq!(p.source_of(&q), Some("q2"));
        p.retain_k_range(4, 10);
        assert!(p.is_empty());
    }

    #[test]
    fn config_must_be_disjoint() {
        assert!(QiConfig::new(["id"], ["age", "Zip"], ["salary"]).is_ok());
        assert!(matches!(
            QiConfig::new(["id"], ["age", "ID"], ["salary"]),
            Err(PrivacyError::InvalidConfig(_))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(MiningParams::new(0, 1, 2).is_err());
        assert!(MiningParams::new(1, 3, 2).is_err());
        assert_eq!(MiningParams::default(), MiningParams::new(3, 1, 1000).unwrap());
    }

    #[test]
    fn profile_file_is_sorted() {
        let cfg = QiConfig::new(["id"], ["age", "zipcode"], ["salary"]).unwrap();
        let p = PrivacyProfile::from_limits([lim(2, &["zipcode"]), lim(5, &["zipcode", "age"]), lim(3, &["age"])]);
        let json = serde_json::to_string(&ProfileFile::new(&cfg, &p)).unwrap();
        assert_eq!(
            json,
            r#"{"config":{"identifiers":["id"],"quasi_identifiers":["age","zipcode"],"sensitive":["salary"]},"limits":[{"k":3,"q":["age"]},{"k":5,"q":["age","zipcode"]},{"k":2,"q":["zipcode"]}]}"#
        );
        let back: ProfileFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.profile(), p);
    }
}
