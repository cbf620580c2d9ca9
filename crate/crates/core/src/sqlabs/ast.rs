//! Syntax tree for the SELECT dialect and its canonical rendering.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::PLACEHOLDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<>")]
    Ne,
    #[serde(rename = "IN")]
    In,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "<>",
            CmpOp::In => "IN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    /// Numeric literal, verbatim source text.
    Number(String),
    /// String literal contents with quotes removed.
    Str(String),
    Placeholder,
}

impl Literal {
    /// Cell-comparable text of the literal. `None` for the placeholder.
    pub fn text(&self) -> Option<&str> {
        match self {
            Literal::Number(s) | Literal::Str(s) => Some(s),
            Literal::Placeholder => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(s) => f.write_str(s),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Placeholder => f.write_str(PLACEHOLDER),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Value(Literal),
    List(Vec<Literal>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub column: String,
    pub op: CmpOp,
    pub rhs: Operand,
}

/// WHERE tree. `And`/`Or` nodes are n-ary and never directly contain a node
/// of their own kind; the parser flattens such nesting.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Cmp(Comparison),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    /// Comparisons in left-to-right source order.
    pub fn comparisons(&self) -> Vec<&Comparison> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Comparison>) {
        match self {
            Predicate::Cmp(c) => out.push(c),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.collect(out)),
        }
    }

    /// Comparisons that every satisfying row must meet: the predicate itself
    /// when it is a comparison, or the direct comparison children of a
    /// top-level conjunction.
    pub fn conjuncts(&self) -> Vec<&Comparison> {
        match self {
            Predicate::Cmp(c) => vec![c],
            Predicate::And(ps) => ps
                .iter()
                .filter_map(|p| match p {
                    Predicate::Cmp(c) => Some(c),
                    _ => None,
                })
                .collect(),
            Predicate::Or(_) => Vec::new(),
        }
    }

    pub(crate) fn map_literals(&self, f: &impl Fn(&Comparison) -> Operand) -> Predicate {
        match self {
            Predicate::Cmp(c) => Predicate::Cmp(Comparison {
                column: c.column.clone(),
                op: c.op,
                rhs: f(c),
            }),
            Predicate::And(ps) => Predicate::And(ps.iter().map(|p| p.map_literals(f)).collect()),
            Predicate::Or(ps) => Predicate::Or(ps.iter().map(|p| p.map_literals(f)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SelectItems {
    Columns(Vec<String>),
    CountStar,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SqlAst {
    pub items: SelectItems,
    pub table: String,
    pub selection: Option<Predicate>,
}

impl SqlAst {
    pub fn is_count(&self) -> bool {
        matches!(self.items, SelectItems::CountStar)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.column, self.op.symbol())?;
        match &self.rhs {
            Operand::Value(v) => write!(f, "{v}"),
            Operand::List(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp(c) => write!(f, "{c}"),
            Predicate::And(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" AND ")?;
                    }
                    match p {
                        Predicate::Or(_) => write!(f, "({p})")?,
                        _ => write!(f, "{p}")?,
                    }
                }
                Ok(())
            }
            Predicate::Or(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" OR ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for SqlAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.items {
            SelectItems::Columns(cols) => f.write_str(&cols.join(", "))?,
            SelectItems::CountStar => f.write_str("COUNT(*)")?,
        }
        write!(f, " FROM {}", self.table)?;
        if let Some(p) = &self.selection {
            write!(f, " WHERE {p}")?;
        }
        Ok(())
    }
}
