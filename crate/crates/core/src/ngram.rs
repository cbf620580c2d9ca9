//! N-gram behavioural profiles over abstracted query sequences.
//!
//! A profile is the set of contiguous length-`n` windows of query templates.
//! Windows never cross principals: each principal's queries form their own
//! stream in timestamp order, and the profile is the union of the windows of
//! all streams. Comparison is plain set difference.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sqlabs::{abstract_query, LogError, RawQuery};

pub type Gram = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NGramError {
    #[error("n-gram size must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("profiles use different window sizes: run n={run}, normative n={norm}")]
    NMismatch { run: usize, norm: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramProfile {
    n: usize,
    grams: BTreeSet<Gram>,
    /// Log index of the earliest window start for each gram. Empty for
    /// profiles read back from a file.
    #[serde(skip)]
    first_seen: BTreeMap<Gram, usize>,
}

impl PartialEq for NGramProfile {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.grams == other.grams
    }
}

impl Eq for NGramProfile {}

impl NGramProfile {
    pub fn empty(n: usize) -> Result<Self, NGramError> {
        check_n(n)?;
        Ok(Self {
            n,
            grams: BTreeSet::new(),
            first_seen: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grams(&self) -> &BTreeSet<Gram> {
        &self.grams
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn contains(&self, gram: &[String]) -> bool {
        self.grams.contains(gram)
    }

    pub fn first_seen(&self, gram: &[String]) -> Option<usize> {
        self.first_seen.get(gram).copied()
    }

    fn insert(&mut self, gram: Gram, start: usize) {
        self.first_seen
            .entry(gram.clone())
            .and_modify(|s| *s = (*s).min(start))
            .or_insert(start);
        self.grams.insert(gram);
    }
}

fn check_n(n: usize) -> Result<(), NGramError> {
    if n < 1 {
        Err(NGramError::InvalidN(n))
    } else {
        Ok(())
    }
}

/// Profile of a single sequence; first-seen indices are window starts.
pub fn build_profile<S: AsRef<str>>(templates: &[S], n: usize) -> Result<NGramProfile, NGramError> {
    let mut profile = NGramProfile::empty(n)?;
    for (start, w) in templates.windows(n).enumerate() {
        profile.insert(w.iter().map(|s| s.as_ref().to_string()).collect(), start);
    }
    Ok(profile)
}

/// Grams present in the run-time profile but absent from the normative one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub n: usize,
    /// Each missing gram with the log index where it first starts.
    #[serde(with = "missing_list")]
    pub missing: BTreeMap<Gram, Option<usize>>,
}

/// JSON object keys must be strings, so grams are written as a list.
mod missing_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Gram;

    #[derive(Serialize, Deserialize)]
    struct Item {
        gram: Gram,
        first_seen: Option<usize>,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<Gram, Option<usize>>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(g, f)| Item {
            gram: g.clone(),
            first_seen: *f,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Gram, Option<usize>>, D::Error> {
        let items = Vec::<Item>::deserialize(d)?;
        Ok(items.into_iter().map(|i| (i.gram, i.first_seen)).collect())
    }
}

impl MismatchReport {
    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }
}

pub fn compare(run: &NGramProfile, norm: &NGramProfile) -> Result<MismatchReport, NGramError> {
    if run.n != norm.n {
        return Err(NGramError::NMismatch {
            run: run.n,
            norm: norm.n,
        });
    }
    let missing = run
        .grams
        .difference(&norm.grams)
        .map(|g| (g.clone(), run.first_seen(g)))
        .collect();
    Ok(MismatchReport { n: run.n, missing })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub query_id: String,
    pub principal: String,
    pub ts: i64,
    pub template: String,
}

/// Abstracted audit log, kept in original log order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateLog {
    entries: Vec<TemplateEntry>,
}

/// One window of a principal's stream; `positions` are log indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window<'a> {
    pub principal: &'a str,
    /// Offset of the window's first query within the principal's stream.
    pub stream_offset: usize,
    pub positions: &'a [usize],
    pub gram: Gram,
}

/// A maximal run of overlapping mismatching windows in one stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub principal: String,
    pub positions: Vec<usize>,
    pub query_ids: Vec<String>,
    pub mismatching_windows: usize,
}

impl TemplateLog {
    pub fn new(entries: Vec<TemplateEntry>) -> Self {
        Self { entries }
    }

    pub fn from_queries(log: &[RawQuery]) -> Result<Self, LogError> {
        let entries = log
            .iter()
            .enumerate()
            .map(|(index, q)| {
                let abs = abstract_query(q).map_err(|source| LogError { index, source })?;
                Ok(TemplateEntry {
                    query_id: q.id.clone(),
                    principal: q.principal.clone(),
                    ts: q.ts,
                    template: abs.template,
                })
            })
            .collect::<Result<_, LogError>>()?;
        Ok(Self { entries })
    }

    /// Single-principal log over bare templates.
    pub fn from_templates<S: AsRef<str>>(templates: &[S]) -> Self {
        let entries = templates
            .iter()
            .enumerate()
            .map(|(i, t)| TemplateEntry {
                query_id: i.to_string(),
                principal: String::new(),
                ts: i as i64,
                template: t.as_ref().to_string(),
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[TemplateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Log indices per principal, each stream stably sorted by timestamp.
    pub fn streams(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            out.entry(e.principal.as_str()).or_default().push(i);
        }
        for idx in out.values_mut() {
            idx.sort_by_key(|&i| self.entries[i].ts);
        }
        out
    }

    fn for_each_window<'a>(
        &'a self,
        streams: &'a BTreeMap<&'a str, Vec<usize>>,
        n: usize,
        mut f: impl FnMut(Window<'a>),
    ) {
        for (principal, idx) in streams {
            for (offset, positions) in idx.windows(n).enumerate() {
                let gram = positions
                    .iter()
                    .map(|&i| self.entries[i].template.clone())
                    .collect();
                f(Window {
                    principal,
                    stream_offset: offset,
                    positions,
                    gram,
                });
            }
        }
    }

    pub fn profile(&self, n: usize) -> Result<NGramProfile, NGramError> {
        let mut profile = NGramProfile::empty(n)?;
        let streams = self.streams();
        self.for_each_window(&streams, n, |w| profile.insert(w.gram, w.positions[0]));
        Ok(profile)
    }

    /// Log indices covered by at least one window absent from `norm`.
    pub fn flagged_positions(&self, norm: &NGramProfile) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let streams = self.streams();
        self.for_each_window(&streams, norm.n, |w| {
            if !norm.contains(&w.gram) {
                out.extend(w.positions.iter().copied());
            }
        });
        out
    }

    pub fn incidents(&self, norm: &NGramProfile) -> Vec<Incident> {
        let n = norm.n;
        let streams = self.streams();
        let mut out = Vec::new();
        for (principal, idx) in &streams {
            // (first offset, end offset, window count)
            let mut current: Option<(usize, usize, usize)> = None;
            let flush = |span: (usize, usize, usize), out: &mut Vec<Incident>| {
                let positions: Vec<usize> = idx[span.0..span.1].to_vec();
                out.push(Incident {
                    principal: principal.to_string(),
                    query_ids: positions
                        .iter()
                        .map(|&i| self.entries[i].query_id.clone())
                        .collect(),
                    positions,
                    mismatching_windows: span.2,
                });
            };
            for (offset, positions) in idx.windows(n).enumerate() {
                let known = {
                    let gram: Gram = positions
                        .iter()
                        .map(|&i| self.entries[i].template.clone())
                        .collect();
                    norm.contains(&gram)
                };
                if known {
                    continue;
                }
                current = match current {
                    Some((s, e, c)) if offset < e => Some((s, offset + n, c + 1)),
                    Some(span) => {
                        flush(span, &mut out);
                        Some((offset, offset + n, 1))
                    }
                    None => Some((offset, offset + n, 1)),
                };
            }
            if let Some(span) = current {
                flush(span, &mut out);
            }
        }
        out.sort_by_key(|i| i.positions.first().copied());
        out
    }
}

/// Mismatch count between two anomaly-free logs for each candidate `n`:
/// grams of `log_b` that `log_a` never produced.
pub fn tune_n(
    log_a: &TemplateLog,
    log_b: &TemplateLog,
    n_values: &[usize],
) -> Result<Vec<(usize, usize)>, NGramError> {
    n_values
        .iter()
        .map(|&n| {
            let report = compare(&log_b.profile(n)?, &log_a.profile(n)?)?;
            Ok((n, report.len()))
        })
        .collect()
}

/// With a threshold: the largest `n` whose count is at most `threshold`.
/// Without: the `n` with the smallest count, ties going to the larger `n`.
pub fn select_n(counts: &[(usize, usize)], threshold: Option<usize>) -> Option<usize> {
    match threshold {
        Some(t) => counts
            .iter()
            .filter(|(_, c)| *c <= t)
            .map(|(n, _)| *n)
            .max(),
        None => counts
            .iter()
            .min_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(n, _)| *n),
    }
}
