//! Row predicates over raw feature values.
//!
//! Grammar:
//!
//! ```text
//! expr   := and ( "or" and )*
//! and    := atom ( "and" atom )*
//! atom   := "(" expr ")" | feature op literal
//! op     := "==" | "!=" | "<" | "<=" | ">" | ">="
//! literal:= number | "quoted" | 'quoted'
//! ```
//!
//! Feature names are bare identifiers or backtick-quoted. Categorical features
//! only support `==` and `!=` against one of their declared levels.

use std::fmt;

use super::dataset::Value;
use super::schema::{FeatureKind, FeatureSchema};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Or(Vec<Expr>),
    And(Vec<Expr>),
    Num { feature: usize, op: CmpOp, value: f64 },
    Level { feature: usize, op: CmpOp, level: usize },
}

/// A compiled predicate bound to one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    text: String,
    expr: Expr,
    features: Vec<usize>,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    And,
    Or,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '=' | '!' | '<' | '>' => {
                let next = chars.get(i + 1).copied();
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (CmpOp::Eq, 2),
                    ('!', Some('=')) => (CmpOp::Ne, 2),
                    ('<', Some('=')) => (CmpOp::Le, 2),
                    ('>', Some('=')) => (CmpOp::Ge, 2),
                    ('<', _) => (CmpOp::Lt, 1),
                    ('>', _) => (CmpOp::Gt, 1),
                    _ => return Err(format!("unexpected '{c}' at offset {i}")),
                };
                tokens.push(Token::Op(op));
                i += len;
            }
            '"' | '\'' | '`' => {
                let quote = c;
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != quote {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(format!("unterminated {quote} quote at offset {i}"));
                }
                let s: String = chars[start..j].iter().collect();
                tokens.push(if quote == '`' { Token::Ident(s) } else { Token::Str(s) });
                i = j + 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()=!<>\"'`".contains(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let lower = word.to_ascii_lowercase();
                if lower == "and" {
                    tokens.push(Token::And);
                } else if lower == "or" {
                    tokens.push(Token::Or);
                } else if let Ok(v) = word.parse::<f64>() {
                    tokens.push(Token::Num(v));
                } else {
                    tokens.push(Token::Ident(word));
                }
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    schema: &'a FeatureSchema,
    features: Vec<usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut terms = vec![self.and()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
    }

    fn and(&mut self) -> Result<Expr, String> {
        let mut terms = vec![self.atom()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            terms.push(self.atom()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::And(terms) })
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    other => Err(format!("expected ')', found {other:?}")),
                }
            }
            Some(Token::Ident(name)) => {
                let op = match self.next() {
                    Some(Token::Op(op)) => op,
                    other => return Err(format!("expected comparison operator after '{name}', found {other:?}")),
                };
                let literal = self.next().ok_or_else(|| format!("missing value after '{name} {}'", op.symbol()))?;
                self.comparison(&name, op, literal)
            }
            other => Err(format!("expected feature name or '(', found {other:?}")),
        }
    }

    fn comparison(&mut self, name: &str, op: CmpOp, literal: Token) -> Result<Expr, String> {
        let feature = self.schema.index_of(name).ok_or_else(|| format!("unknown feature '{name}'"))?;
        self.features.push(feature);
        match (&self.schema.features()[feature].kind, literal) {
            (FeatureKind::Continuous, Token::Num(value)) => Ok(Expr::Num { feature, op, value }),
            (FeatureKind::Continuous, other) => Err(format!("continuous feature '{name}' compared to non-number {other:?}")),
            (FeatureKind::Categorical { levels }, Token::Str(s)) => {
                if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                    return Err(format!("categorical feature '{name}' supports only == and !="));
                }
                let level = levels
                    .iter()
                    .position(|l| *l == s)
                    .ok_or_else(|| format!("level '{s}' not in {{{}}} for feature '{name}'", levels.join(",")))?;
                Ok(Expr::Level { feature, op, level })
            }
            (FeatureKind::Categorical { .. }, other) => {
                Err(format!("categorical feature '{name}' must be compared to a quoted level, found {other:?}"))
            }
        }
    }
}

impl Predicate {
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self, DataError> {
        let err = |msg: String| DataError::Predicate(format!("{text:?}: {msg}"));
        let tokens = tokenize(text).map_err(err)?;
        if tokens.is_empty() {
            return Err(err("empty predicate".into()));
        }
        let mut parser = Parser { tokens, pos: 0, schema, features: Vec::new() };
        let expr = parser.expr().map_err(err)?;
        if parser.pos != parser.tokens.len() {
            return Err(err(format!("unexpected trailing token {:?}", parser.tokens[parser.pos])));
        }
        let mut features = parser.features;
        features.sort_unstable();
        features.dedup();
        Ok(Self { text: text.trim().to_string(), expr, features })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Schema indices of every feature the predicate mentions.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn eval(&self, row: &[Value]) -> bool {
        eval(&self.expr, row)
    }
}

fn eval(expr: &Expr, row: &[Value]) -> bool {
    match expr {
        Expr::Or(terms) => terms.iter().any(|t| eval(t, row)),
        Expr::And(terms) => terms.iter().all(|t| eval(t, row)),
        Expr::Num { feature, op, value } => match row[*feature] {
            Value::Num(v) => v.partial_cmp(value).is_some_and(|o| op.holds(o)),
            Value::Level(_) => false,
        },
        Expr::Level { feature, op, level } => match row[*feature] {
            Value::Level(l) => op.holds(l.cmp(level)),
            Value::Num(_) => false,
        },
    }
}
