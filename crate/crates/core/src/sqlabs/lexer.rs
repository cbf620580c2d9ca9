//! Tokenizer for the supported SELECT dialect.

use super::ast::CmpOp;
use super::SyntaxError;

/// Literal placeholder emitted by abstraction; lexes as its own token so that
/// abstracted templates parse back.
pub const PLACEHOLDER: &str = "VAR_VAL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Select,
    From,
    Where,
    And,
    Or,
    In,
    Ident(String),
    Number(String),
    Str(String),
    Placeholder,
    Op(CmpOp),
    Comma,
    LParen,
    RParen,
    Star,
    Semicolon,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Select => "SELECT".into(),
            TokenKind::From => "FROM".into(),
            TokenKind::Where => "WHERE".into(),
            TokenKind::And => "AND".into(),
            TokenKind::Or => "OR".into(),
            TokenKind::In => "IN".into(),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(s) => format!("number `{s}`"),
            TokenKind::Str(s) => format!("string '{s}'"),
            TokenKind::Placeholder => PLACEHOLDER.into(),
            TokenKind::Op(op) => format!("`{}`", op.symbol()),
            TokenKind::Comma => "`,`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Semicolon => "`;`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the first character of the token.
    pub pos: usize,
}

pub fn tokenize(sql: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let mut chars = sql.char_indices().peekable();

    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = match c {
            ',' => single(&mut chars, TokenKind::Comma),
            '(' => single(&mut chars, TokenKind::LParen),
            ')' => single(&mut chars, TokenKind::RParen),
            '*' => single(&mut chars, TokenKind::Star),
            ';' => single(&mut chars, TokenKind::Semicolon),
            '=' => single(&mut chars, TokenKind::Op(CmpOp::Eq)),
            '<' => {
                chars.next();
                match chars.peek().map(|&(_, c)| c) {
                    Some('=') => {
                        chars.next();
                        TokenKind::Op(CmpOp::Le)
                    }
                    Some('>') => {
                        chars.next();
                        TokenKind::Op(CmpOp::Ne)
                    }
                    _ => TokenKind::Op(CmpOp::Lt),
                }
            }
            '>' => {
                chars.next();
                if matches!(chars.peek(), Some(&(_, '='))) {
                    chars.next();
                    TokenKind::Op(CmpOp::Ge)
                } else {
                    TokenKind::Op(CmpOp::Gt)
                }
            }
            '!' => {
                chars.next();
                if matches!(chars.peek(), Some(&(_, '='))) {
                    chars.next();
                    TokenKind::Op(CmpOp::Ne)
                } else {
                    return Err(SyntaxError::new(pos, "`!`", "`!=`"));
                }
            }
            '\'' | '"' => {
                chars.next();
                TokenKind::Str(quoted(&mut chars, c, c, pos)?)
            }
            '\u{2018}' => {
                chars.next();
                TokenKind::Str(quoted(&mut chars, '\u{2018}', '\u{2019}', pos)?)
            }
            c if c.is_ascii_digit() => TokenKind::Number(number(&mut chars, String::new())),
            '-' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, d)) if d.is_ascii_digit() => {
                        TokenKind::Number(number(&mut chars, String::from("-")))
                    }
                    _ => return Err(SyntaxError::new(pos, "`-`", "a number")),
                }
            }
            c if c.is_alphabetic() || c == '_' => word(&mut chars),
            other => {
                return Err(SyntaxError::new(
                    pos,
                    format!("character `{other}`"),
                    "a token of the SELECT dialect",
                ))
            }
        };
        tokens.push(Token { kind, pos });
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos: sql.len(),
    });
    Ok(tokens)
}

type Chars<'a> = std::iter::Peekable<std::str::CharIndices<'a>>;

fn single(chars: &mut Chars<'_>, kind: TokenKind) -> TokenKind {
    chars.next();
    kind
}

// Doubling the closing quote escapes it.
fn quoted(chars: &mut Chars<'_>, open: char, close: char, start: usize) -> Result<String, SyntaxError> {
    let mut out = String::new();
    loop {
        match chars.next() {
            Some((_, c)) if c == close => {
                if open == close && matches!(chars.peek(), Some(&(_, n)) if n == close) {
                    chars.next();
                    out.push(close);
                } else {
                    return Ok(out);
                }
            }
            Some((_, c)) => out.push(c),
            None => {
                return Err(SyntaxError::new(
                    start,
                    "unterminated string literal",
                    format!("closing `{close}`"),
                ))
            }
        }
    }
}

fn number(chars: &mut Chars<'_>, mut out: String) -> String {
    let mut seen_dot = false;
    while let Some(&(_, c)) = chars.peek() {
        if c.is_ascii_digit() {
            out.push(c);
        } else if c == '.' && !seen_dot {
            seen_dot = true;
            out.push(c);
        } else {
            break;
        }
        chars.next();
    }
    out
}

// Identifiers may contain interior hyphens (`native-country`, `e-mail_id`);
// the dialect has no arithmetic so this is unambiguous.
fn word(chars: &mut Chars<'_>) -> TokenKind {
    let mut out = String::new();
    while let Some(&(_, c)) = chars.peek() {
        if c.is_alphanumeric() || c == '_' {
            out.push(c);
            chars.next();
        } else if c == '-' {
            let mut ahead = chars.clone();
            ahead.next();
            match ahead.peek() {
                Some(&(_, n)) if n.is_alphanumeric() || n == '_' => {
                    out.push('-');
                    chars.next();
                }
                _ => break,
            }
        } else {
            break;
        }
    }
    if out.eq_ignore_ascii_case(PLACEHOLDER) {
        return TokenKind::Placeholder;
    }
    match out.to_ascii_lowercase().as_str() {
        "select" => TokenKind::Select,
        "from" => TokenKind::From,
        "where" => TokenKind::Where,
        "and" => TokenKind::And,
        "or" => TokenKind::Or,
        "in" => TokenKind::In,
        _ => TokenKind::Ident(out.to_lowercase()),
    }
}
