use serde::{Deserialize, Serialize};

use super::{detect, entry_limits, PrivacyAnomaly, PrivacyProfile, QiConfig};
use crate::engine::{Database, EngineError, LogEntry, Response, ResponseLog};
use crate::sqlabs::{self, RawQuery, SelectItems};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuppressionReason {
    IdentifierExposed { attributes: Vec<String> },
    Anomalous { anomalies: Vec<PrivacyAnomaly> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub response: Response,
    /// Set iff the response was suppressed.
    pub reason: Option<SuppressionReason>,
}

/// Executes `query` and withholds the response when it exposes an
/// identifier attribute or when any of its limits is anomalous with respect
/// to `norm`.
pub fn enforce(
    db: &Database,
    query: &RawQuery,
    norm: &PrivacyProfile,
    cfg: &QiConfig,
    m_max: usize,
) -> Result<Decision, EngineError> {
    let ast = sqlabs::parse(&query.sql)?;
    let relation = db.execute_ast(&ast, &query.id)?;

    if let SelectItems::Columns(cols) = &ast.items {
        let exposed: Vec<String> = cols
            .iter()
            .filter(|c| cfg.identifiers.contains(*c))
            .cloned()
            .collect();
        if !exposed.is_empty() {
            return Ok(Decision {
                response: Response::Suppressed,
                reason: Some(SuppressionReason::IdentifierExposed { attributes: exposed }),
            });
        }
    }

    let entry = LogEntry {
        query: query.clone(),
        response: Response::Rows(relation),
    };
    let anomalies = detect(&entry_limits(&entry, cfg, m_max), norm);
    if anomalies.is_empty() {
        Ok(Decision {
            response: entry.response,
            reason: None,
        })
    } else {
        Ok(Decision {
            response: Response::Suppressed,
            reason: Some(SuppressionReason::Anomalous { anomalies }),
        })
    }
}

/// Enforcement point that records every released or suppressed response.
#[derive(Debug, Clone)]
pub struct Guard {
    norm: PrivacyProfile,
    cfg: QiConfig,
    m_max: usize,
    log: ResponseLog,
    suppressions: Vec<(String, SuppressionReason)>,
}

impl Guard {
    pub fn new(norm: PrivacyProfile, cfg: QiConfig, m_max: usize) -> Self {
        Self {
            norm,
            cfg,
            m_max,
            log: ResponseLog::new(),
            suppressions: Vec::new(),
        }
    }

    pub fn submit(&mut self, db: &Database, query: &RawQuery) -> Result<Decision, EngineError> {
        let decision = enforce(db, query, &self.norm, &self.cfg, self.m_max)?;
        if let Some(reason) = &decision.reason {
            self.suppressions.push((query.id.clone(), reason.clone()));
        }
        self.log.push(query.clone(), decision.response.clone());
        Ok(decision)
    }

    pub fn log(&self) -> &ResponseLog {
        &self.log
    }

    pub fn suppressions(&self) -> &[(String, SuppressionReason)] {
        &self.suppressions
    }

    pub fn into_log(self) -> ResponseLog {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Table;
    use crate::privacy::PrivacyLimit;

    fn smp() -> (Database, QiConfig, PrivacyProfile) {
        let db = Database::new().with_table(crate::fixtures::updated_table_smp());
        let cfg = QiConfig::new(["name"], ["maritalstatus", "city", "age"], ["salary"]).unwrap();
        let norm = PrivacyProfile::from_limits([
            PrivacyLimit::new(3, ["city"]),
            PrivacyLimit::new(3, ["age"]),
            PrivacyLimit::new(3, ["maritalstatus"]),
        ]);
        (db, cfg, norm)
    }

    #[test]
    fn singling_out_by_predicate_is_suppressed() {
        let (db, cfg, norm) = smp();
        let q = RawQuery::new("q1", "a", 0, "SELECT Salary FROM updated_table_smp WHERE city = 'Rennes';");
        let d = enforce(&db, &q, &norm, &cfg, 3).unwrap();
        assert!(d.response.is_suppressed());
        assert!(matches!(d.reason, Some(SuppressionReason::Anomalous { .. })));
    }

    #[test]
    fn unrestricted_sensitive_column_is_released() {
        let (db, cfg, norm) = smp();
        let q = RawQuery::new("q2", "a", 0, "SELECT Salary FROM updated_table_smp;");
        let d = enforce(&db, &q, &norm, &cfg, 3).unwrap();
        assert_eq!(d.response.relation().unwrap().rows.len(), 14);
        assert!(d.reason.is_none());
    }

    #[test]
    fn identifiers_are_always_suppressed() {
        let (db, cfg, norm) = smp();
        let q = RawQuery::new("q", "a", 0, "SELECT name, city FROM updated_table_smp WHERE city = 'London'");
        let d = enforce(&db, &q, &norm, &cfg, 3).unwrap();
        assert_eq!(
            d.reason,
            Some(SuppressionReason::IdentifierExposed {
                attributes: vec!["name".into()]
            })
        );
    }

    #[test]
    fn empty_table_is_released() {
        let (_, cfg, norm) = smp();
        let db = Database::new().with_table(Table::new("empty", vec!["city".into()], vec![]).unwrap());
        let q = RawQuery::new("q", "a", 0, "SELECT city FROM empty WHERE city = 'x'");
        let d = enforce(&db, &q, &norm, &cfg, 3).unwrap();
        assert_eq!(d.response.relation().unwrap().rows.len(), 0);
    }

    #[test]
    fn guard_logs_suppressions() {
        let (db, cfg, norm) = smp();
        let mut g = Guard::new(norm, cfg, 3);
        g.submit(&db, &RawQuery::new("1", "a", 1, "SELECT salary FROM updated_table_smp WHERE city = 'Rennes'"))
            .unwrap();
        g.submit(&db, &RawQuery::new("2", "a", 2, "SELECT salary FROM updated_table_smp"))
            .unwrap();
        assert_eq!(g.suppressions().len(), 1);
        assert_eq!(g.suppressions()[0].0, "1");
        assert_eq!(g.log().len(), 2);
        assert!(g.log().entries()[0].response.is_suppressed());
        assert!(g
            .submit(&db, &RawQuery::new("3", "a", 3, "SELECT salary FROM nowhere"))
            .is_err());
    }
}
