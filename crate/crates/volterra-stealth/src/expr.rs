//! Coefficient-expression mini-language for time-varying system matrices.
//!
//! Config files describe `A(t)`, `B(t)`, `C(t)` entries with a small, fixed
//! vocabulary — enough for every system in scope, while keeping configs
//! serializable and free of arbitrary code:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor ('*' factor)*
//! factor  := '-' factor | primary ('^' UINT)?
//! primary := NUMBER | 't' | 'exp' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Examples: `"1"`, `"-t^2"`, `"-(3*t^2+0.5)"`, `"0.5*t^3 - t"`,
//! `"exp(-0.5*t)"`. There is no division and no variable other than `t`.
//!
//! Parsing is a hand-rolled recursive descent with a hard depth cap and an
//! input-length cap, so arbitrary (including adversarial) input fails
//! cleanly instead of overflowing the stack. Numeric literals must be
//! finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::Result;

/// Maximum nesting depth accepted by the parser.
const MAX_DEPTH: usize = 64;
/// Maximum accepted source length in bytes.
const MAX_LEN: usize = 4096;
/// Maximum exponent in `^k` (repeated multiplication stays cheap and
/// overflow-free in the representable range).
const MAX_POW: u32 = 64;

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// A finite numeric literal.
    Const(f64),
    /// The time variable `t`.
    Time,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer power `base^k`, `k ≤ 64`.
    Pow(Box<Expr>, u32),
    /// `exp(inner)`.
    Exp(Box<Expr>),
}

impl Expr {
    /// Evaluates at time `t`. May return non-finite values for expressions
    /// that overflow (e.g. `exp(t^3)` at large `t`); construction sites that
    /// require finiteness (signals, kernel tables, ODE caches) reject those
    /// with context.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::Add(a, b) => a.eval(t) + b.eval(t),
            Expr::Sub(a, b) => a.eval(t) - b.eval(t),
            Expr::Mul(a, b) => a.eval(t) * b.eval(t),
            Expr::Neg(a) => -a.eval(t),
            Expr::Pow(a, k) => a.eval(t).powi(*k as i32),
            Expr::Exp(a) => a.eval(t).exp(),
        }
    }
}

/// A coefficient expression: the parsed tree plus its source text.
///
/// The source is kept for display and serialization, so configs round-trip
/// byte-for-byte. Two `CoefExpr` are equal iff their sources are equal.
#[derive(Debug, Clone)]
pub struct CoefExpr {
    src: String,
    ast: Expr,
}

impl CoefExpr {
    /// Parses an expression from source text.
    pub fn parse(src: &str) -> Result<Self> {
        let ast = parse_expr_str(src)?;
        Ok(CoefExpr { src: src.trim().to_string(), ast })
    }

    /// A constant expression.
    pub fn constant(c: f64) -> Self {
        CoefExpr { src: format!("{c}"), ast: Expr::Const(c) }
    }

    /// Evaluates at time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.ast.eval(t)
    }

    /// The parsed tree.
    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    /// Source text as written (trimmed).
    pub fn src(&self) -> &str {
        &self.src
    }
}

impl PartialEq for CoefExpr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

impl fmt::Display for CoefExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl FromStr for CoefExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CoefExpr::parse(s)
    }
}

impl Serialize for CoefExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.src)
    }
}

impl<'de> Deserialize<'de> for CoefExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        // Accept either an expression string or a bare JSON number.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(c) if c.is_finite() => Ok(CoefExpr::constant(c)),
            Raw::Num(c) => Err(serde::de::Error::custom(format!(
                "coefficient must be finite, got {c}"
            ))),
            Raw::Str(s) => CoefExpr::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    /// `t`
    Time,
    /// `exp`
    ExpFn,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let (num, used) = scan_number(&src[i..])?;
                tokens.push(Token::Num(num));
                i += used;
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                match &src[start..i] {
                    "t" => tokens.push(Token::Time),
                    "exp" => tokens.push(Token::ExpFn),
                    other => {
                        return Err(Error::Expr(format!(
                            "unknown identifier '{other}' (only 't' and 'exp' are defined)"
                        )))
                    }
                }
            }
            other => {
                return Err(Error::Expr(format!(
                    "unexpected character '{other}' at byte {i}"
                )))
            }
        }
    }
    Ok(tokens)
}

/// Scans a decimal literal with optional fraction and exponent. The exponent
/// marker is consumed only when followed by a valid exponent, so `2*exp(t)`
/// tokenizes as `2`, `*`, `exp`, …
fn scan_number(s: &str) -> Result<(f64, usize)> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i == 0 || s[..i] == *"." {
        return Err(Error::Expr(format!("malformed number at '{s}'")));
    }
    // optional exponent: e/E [+/-] digits — only if it fully matches
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let digits_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > digits_start {
            i = j;
        }
    }
    let text = &s[..i];
    let v: f64 = text
        .parse()
        .map_err(|e| Error::Expr(format!("cannot parse number '{text}': {e}")))?;
    if !v.is_finite() {
        return Err(Error::Expr(format!("numeric literal '{text}' overflows f64")));
    }
    Ok((v, i))
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == want => Ok(()),
            got => Err(Error::Expr(format!("expected {want:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr> {
        if depth > MAX_DEPTH {
            return Err(Error::Expr(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        let mut acc = self.term(depth + 1)?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    let rhs = self.term(depth + 1)?;
                    acc = Expr::Add(Box::new(acc), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.next();
                    let rhs = self.term(depth + 1)?;
                    acc = Expr::Sub(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr> {
        if depth > MAX_DEPTH {
            return Err(Error::Expr(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        let mut acc = self.factor(depth + 1)?;
        while matches!(self.peek(), Some(Token::Star)) {
            self.next();
            let rhs = self.factor(depth + 1)?;
            acc = Expr::Mul(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn factor(&mut self, depth: usize) -> Result<Expr> {
        if depth > MAX_DEPTH {
            return Err(Error::Expr(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        if matches!(self.peek(), Some(Token::Minus)) {
            self.next();
            let inner = self.factor(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let base = self.primary(depth + 1)?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.next();
            match self.next() {
                Some(Token::Num(k)) if k.fract() == 0.0 && k >= 0.0 && k <= MAX_POW as f64 => {
                    Ok(Expr::Pow(Box::new(base), k as u32))
                }
                got => Err(Error::Expr(format!(
                    "exponent must be an integer in 0..={MAX_POW}, found {got:?}"
                ))),
            }
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self, depth: usize) -> Result<Expr> {
        if depth > MAX_DEPTH {
            return Err(Error::Expr(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Time) => Ok(Expr::Time),
            Some(Token::ExpFn) => {
                self.expect(Token::LParen)?;
                let inner = self.expr(depth + 1)?;
                self.expect(Token::RParen)?;
                Ok(Expr::Exp(Box::new(inner)))
            }
            Some(Token::LParen) => {
                let inner = self.expr(depth + 1)?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            got => Err(Error::Expr(format!("expected a value, found {got:?}"))),
        }
    }
}

fn parse_expr_str(src: &str) -> Result<Expr> {
    if src.len() > MAX_LEN {
        return Err(Error::Expr(format!(
            "expression longer than {MAX_LEN} bytes ({})",
            src.len()
        )));
    }
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr(0)?;
    if p.pos != p.tokens.len() {
        return Err(Error::Expr(format!(
            "trailing tokens after expression: {:?}",
            &p.tokens[p.pos..]
        )));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, t: f64) -> f64 {
        CoefExpr::parse(src).unwrap().eval(t)
    }

    #[test]
    fn constants_and_time() {
        assert_eq!(eval("1", 5.0), 1.0);
        assert_eq!(eval("2.5e-3", 0.0), 2.5e-3);
        assert_eq!(eval("t", 3.5), 3.5);
        assert_eq!(eval(".5", 0.0), 0.5);
    }

    #[test]
    fn example_controllers_evaluate_correctly() {
        // ẋ = -t² x + u
        assert_eq!(eval("-t^2", 2.0), -4.0);
        // ẋ = -(3t² + 0.5) x + u
        assert_eq!(eval("-(3*t^2+0.5)", 2.0), -12.5);
        assert_eq!(eval("-(3*t^2+0.5)", 0.0), -0.5);
    }

    #[test]
    fn polynomials_and_powers() {
        assert_eq!(eval("0.5*t^3 - t", 2.0), 2.0);
        assert_eq!(eval("t*t", 3.0), 9.0);
        assert_eq!(eval("t^0", 7.0), 1.0);
        assert_eq!(eval("2^3", 0.0), 8.0);
        assert_eq!(eval("-t^2", 3.0), -9.0, "unary minus binds looser than ^");
    }

    #[test]
    fn exp_of_polynomial() {
        let v = eval("exp(-0.5*t)", 2.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(eval("3*exp(0*t)", 1.0), 3.0);
    }

    #[test]
    fn number_exponent_does_not_swallow_exp_function() {
        // '2e' must not consume the 'exp' token
        assert_eq!(eval("2*exp(0)", 0.0), 2.0);
        assert!((eval("2e2*t", 1.0) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "", "t t", "y", "sin(t)", "t^", "t^-1", "t^1.5", "t^999", "(t", "exp t", "1..2",
            "1e999", "*t", "t+", ".",
        ] {
            assert!(CoefExpr::parse(bad).is_err(), "'{bad}' must not parse");
        }
    }

    #[test]
    fn depth_cap_rejects_pathological_nesting() {
        let deep = format!("{}t{}", "(".repeat(500), ")".repeat(500));
        assert!(CoefExpr::parse(&deep).is_err());
    }

    #[test]
    fn serde_roundtrip_preserves_source() {
        let e = CoefExpr::parse(" -(3*t^2+0.5) ").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"-(3*t^2+0.5)\"");
        let back: CoefExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        // bare numbers are accepted too
        let num: CoefExpr = serde_json::from_str("2.5").unwrap();
        assert_eq!(num.eval(0.0), 2.5);
    }
}
