//! Privacy-anomaly detection over SQL audit logs.
//!
//! * [`sqlabs`] parses a small SELECT dialect and abstracts queries to
//!   constant-free templates.
//! * [`engine`] is an in-memory store that produces query responses.
//! * [`privacy`] mines k-anonymity privacy profiles from responses, detects
//!   limits that fall below the normative profile and suppresses them at
//!   query time.
//! * [`ngram`] builds n-gram profiles over template sequences and reports
//!   run-time windows never seen in training.
//! * [`workload`] generates synthetic logs and replays the hospital,
//!   differencing and census scenarios.

pub mod engine;
pub mod fixtures;
pub mod jsonl;
pub mod ngram;
pub mod privacy;
pub mod sqlabs;
pub mod workload;
