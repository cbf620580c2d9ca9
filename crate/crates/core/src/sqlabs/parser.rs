//! Recursive-descent parser:
//!
//! ```text
//! stmt    := SELECT items FROM ident [WHERE or_expr] [;] EOF
//! items   := COUNT ( * ) | ident (, ident)*
//! or_expr := and_expr (OR and_expr)*
//! and_expr:= primary (AND primary)*
//! primary := ( or_expr ) | ident op literal | ident IN ( literal (, literal)* )
//! ```

use super::ast::{CmpOp, Comparison, Literal, Operand, Predicate, SelectItems, SqlAst};
use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;

const MAX_NESTING: usize = 64;

pub fn parse(sql: &str) -> Result<SqlAst, SyntaxError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, idx: 0 };
    let ast = p.statement()?;
    Ok(ast)
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.idx]
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.idx + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.idx].clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let t = self.peek();
        SyntaxError::new(t.pos, t.kind.describe(), expected)
    }

    fn expect(&mut self, kind: TokenKind, expected: &str) -> Result<(), SyntaxError> {
        if self.peek().kind == kind {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String, SyntaxError> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let name = name.clone();
                self.bump();
                Ok(name)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn statement(&mut self) -> Result<SqlAst, SyntaxError> {
        self.expect(TokenKind::Select, "SELECT")?;
        let items = self.items()?;
        self.expect(TokenKind::From, "FROM")?;
        let table = self.ident("table name")?;
        let selection = if self.peek().kind == TokenKind::Where {
            self.bump();
            Some(self.or_expr(0)?)
        } else {
            None
        };
        if self.peek().kind == TokenKind::Semicolon {
            self.bump();
        }
        if self.peek().kind != TokenKind::Eof {
            let expected = if selection.is_some() {
                "AND, OR, `;` or end of statement"
            } else {
                "WHERE, `;` or end of statement"
            };
            return Err(self.error(expected));
        }
        Ok(SqlAst {
            items,
            table,
            selection,
        })
    }

    fn items(&mut self) -> Result<SelectItems, SyntaxError> {
        let is_count = matches!(&self.peek().kind, TokenKind::Ident(n) if n == "count")
            && *self.peek_at(1) == TokenKind::LParen;
        if is_count {
            self.bump();
            self.bump();
            self.expect(TokenKind::Star, "`*`")?;
            self.expect(TokenKind::RParen, "`)`")?;
            return Ok(SelectItems::CountStar);
        }
        let mut cols = vec![self.ident("column name or COUNT(*)")?];
        while self.peek().kind == TokenKind::Comma {
            self.bump();
            cols.push(self.ident("column name")?);
        }
        Ok(SelectItems::Columns(cols))
    }

    fn or_expr(&mut self, depth: usize) -> Result<Predicate, SyntaxError> {
        let mut parts = Vec::new();
        push_flat(&mut parts, self.and_expr(depth)?, false);
        while self.peek().kind == TokenKind::Or {
            self.bump();
            push_flat(&mut parts, self.and_expr(depth)?, false);
        }
        Ok(collapse(parts, false))
    }

    fn and_expr(&mut self, depth: usize) -> Result<Predicate, SyntaxError> {
        let mut parts = Vec::new();
        push_flat(&mut parts, self.primary(depth)?, true);
        while self.peek().kind == TokenKind::And {
            self.bump();
            push_flat(&mut parts, self.primary(depth)?, true);
        }
        Ok(collapse(parts, true))
    }

    fn primary(&mut self, depth: usize) -> Result<Predicate, SyntaxError> {
        if self.peek().kind == TokenKind::LParen {
            if depth >= MAX_NESTING {
                return Err(self.error("at most 64 levels of parentheses"));
            }
            self.bump();
            let inner = self.or_expr(depth + 1)?;
            self.expect(TokenKind::RParen, "`)`")?;
            return Ok(inner);
        }
        let column = self.ident("column name or `(`")?;
        let op = match self.peek().kind {
            TokenKind::Op(op) => {
                self.bump();
                op
            }
            TokenKind::In => {
                self.bump();
                CmpOp::In
            }
            _ => return Err(self.error("comparison operator")),
        };
        let rhs = if op == CmpOp::In {
            self.expect(TokenKind::LParen, "`(`")?;
            let mut values = vec![self.literal()?];
            while self.peek().kind == TokenKind::Comma {
                self.bump();
                values.push(self.literal()?);
            }
            self.expect(TokenKind::RParen, "`,` or `)`")?;
            Operand::List(values)
        } else {
            Operand::Value(self.literal()?)
        };
        Ok(Predicate::Cmp(Comparison { column, op, rhs }))
    }

    fn literal(&mut self) -> Result<Literal, SyntaxError> {
        let lit = match &self.peek().kind {
            TokenKind::Number(n) => Literal::Number(n.clone()),
            TokenKind::Str(s) => Literal::Str(s.clone()),
            TokenKind::Placeholder => Literal::Placeholder,
            _ => return Err(self.error("literal value")),
        };
        self.bump();
        Ok(lit)
    }
}

fn push_flat(parts: &mut Vec<Predicate>, p: Predicate, conjunction: bool) {
    match p {
        Predicate::And(inner) if conjunction => parts.extend(inner),
        Predicate::Or(inner) if !conjunction => parts.extend(inner),
        other => parts.push(other),
    }
}

fn collapse(mut parts: Vec<Predicate>, conjunction: bool) -> Predicate {
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else if conjunction {
        Predicate::And(parts)
    } else {
        Predicate::Or(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmp(column: &str, op: CmpOp, lit: Literal) -> Predicate {
        Predicate::Cmp(Comparison {
            column: column.into(),
            op,
            rhs: Operand::Value(lit),
        })
    }

    #[test]
    fn bank_query() {
        let ast = parse("SELECT city FROM bankDatabase WHERE id = 2").unwrap();
        assert_eq!(ast.items, SelectItems::Columns(vec!["city".into()]));
        assert_eq!(ast.table, "bankdatabase");
        assert_eq!(
            ast.selection,
            Some(cmp("id", CmpOp::Eq, Literal::Number("2".into())))
        );
    }

    #[test]
    fn no_where_clause_with_semicolon() {
        let ast = parse("SELECT Salary FROM updated_table_smp;").unwrap();
        assert_eq!(ast.items, SelectItems::Columns(vec!["salary".into()]));
        assert_eq!(ast.table, "updated_table_smp");
        assert!(ast.selection.is_none());
    }

    #[test]
    fn empty_select_list_rejected_at_from() {
        let err = parse("SELECT FROM x").unwrap_err();
        assert_eq!(err.position, 7);
        assert_eq!(err.found, "FROM");
    }

    #[test]
    fn count_star() {
        let ast = parse("select count(*) from census where sex = 'Female'").unwrap();
        assert!(ast.is_count());
    }

    #[test]
    fn column_named_count_is_still_a_column() {
        let ast = parse("SELECT count FROM t").unwrap();
        assert_eq!(ast.items, SelectItems::Columns(vec!["count".into()]));
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let ast = parse("SELECT a FROM t WHERE x = 1 OR y = 2 AND z = 3").unwrap();
        match ast.selection.unwrap() {
            Predicate::Or(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(parts[1], Predicate::And(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_same_kind_is_flattened() {
        let a = parse("SELECT a FROM t WHERE x = 1 AND (y = 2 AND z = 3)").unwrap();
        let b = parse("SELECT a FROM t WHERE x = 1 AND y = 2 AND z = 3").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn in_list() {
        let ast = parse("SELECT a FROM t WHERE city IN ('Cork', 'Dublin')").unwrap();
        let c = ast.selection.unwrap();
        assert_eq!(
            c,
            Predicate::Cmp(Comparison {
                column: "city".into(),
                op: CmpOp::In,
                rhs: Operand::List(vec![
                    Literal::Str("Cork".into()),
                    Literal::Str("Dublin".into())
                ]),
            })
        );
    }

    #[test]
    fn out_of_grammar_constructs() {
        for sql in [
            "SELECT a FROM t JOIN u",
            "SELECT a FROM t GROUP BY a",
            "SELECT a FROM t WHERE b IN (SELECT b FROM u)",
            "SELECT a FROM t WHERE b = c",
            "SELECT * FROM t",
            "INSERT INTO t VALUES (1)",
            "SELECT a FROM t WHERE (b = 1",
            "",
        ] {
            assert!(parse(sql).is_err(), "{sql} should not parse");
        }
    }

    #[test]
    fn nesting_is_bounded() {
        let deep = format!(
            "SELECT a FROM t WHERE {}b = 1{}",
            "(".repeat(100),
            ")".repeat(100)
        );
        assert!(parse(&deep).is_err());
        let ok = format!(
            "SELECT a FROM t WHERE {}b = 1{}",
            "(".repeat(10),
            ")".repeat(10)
        );
        assert!(parse(&ok).is_ok());
    }

    #[test]
    fn render_round_trip_with_mixed_nesting() {
        let sql = "SELECT a, b FROM t WHERE (x = 1 OR y <> 'q') AND z >= -2.5";
        let ast = parse(sql).unwrap();
        let rendered = ast.to_string();
        assert_eq!(
            rendered,
            "SELECT a, b FROM t WHERE (x = 1 OR y <> 'q') AND z >= -2.5"
        );
        assert_eq!(parse(&rendered).unwrap(), ast);
    }
}
