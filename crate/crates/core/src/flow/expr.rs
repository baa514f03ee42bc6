//! Infix expressions over `x1..xn` used for vector fields and level-set
//! functions.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | var | func '(' expr ')' | '(' expr ')'
//! var    := 'x' digits            (1-based)
//! func   := 'sin' | 'cos' | 'exp'
//! ```
//!
//! `^` is rejected; write powers as products.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character {ch:?} at byte {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("exponentiation '^' is not supported (byte {pos}); write powers as products")]
    PowerNotSupported { pos: usize },
    #[error("unknown identifier {name:?}")]
    UnknownIdentifier { name: String },
    #[error("variable {name} is out of range for dimension {dim}")]
    VariableOutOfRange { name: String, dim: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token {found} at byte {pos}")]
    UnexpectedToken { found: String, pos: usize },
    #[error("invalid number literal {text:?}")]
    BadNumber { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    /// Parses `src` with variables `x1..x{dim}`.
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            dim,
        };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some((tok, pos)) => Err(ParseError::UnexpectedToken {
                found: tok.to_string(),
                pos: *pos,
            }),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    /// Largest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)),
            Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                mul((**b).clone(), (**b).clone()),
            ),
            Sin(a) => mul(Cos(a.clone()), a.derivative(var)),
            Cos(a) => mul(neg(Sin(a.clone())), a.derivative(var)),
            Exp(a) => mul(Exp(a.clone()), a.derivative(var)),
        }
    }

    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        (0..dim).map(|i| self.derivative(i)).collect()
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == v)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_const(0.0) => b,
        _ if b.is_const(0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_const(0.0) => a,
        _ if a.is_const(0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_const(0.0) || b.is_const(0.0) => Expr::Const(0.0),
        _ if a.is_const(1.0) => b,
        _ if b.is_const(1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        return Expr::Const(0.0);
    }
    if b.is_const(1.0) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Plus => f.write_str("'+'"),
            Token::Minus => f.write_str("'-'"),
            Token::Star => f.write_str("'*'"),
            Token::Slash => f.write_str("'/'"),
            Token::LParen => f.write_str("'('"),
            Token::RParen => f.write_str("')'"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Token::Slash, i));
                i += 1;
            }
            '(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            '^' => return Err(ParseError::PowerNotSupported { pos: i }),
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let save = i;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i].is_ascii_digit() {
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        i = save;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::BadNumber {
                    text: text.to_string(),
                })?;
                out.push((Token::Num(v), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
            }
            other => return Err(ParseError::UnexpectedChar { ch: other, pos: i }),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        match self.next() {
            Some((t, _)) if t == want => Ok(()),
            Some((t, pos)) => Err(ParseError::UnexpectedToken {
                found: t.to_string(),
                pos,
            }),
            None => Err(ParseError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some((Token::Plus, _)) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some((Token::Minus, _)) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some((Token::Star, _)) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some((Token::Slash, _)) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some((Token::Minus, _)) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            None => Err(ParseError::UnexpectedEnd),
            Some((Token::Num(v), _)) => Ok(Expr::Const(v)),
            Some((Token::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some((Token::Ident(name), _)) => match name.as_str() {
                "sin" | "cos" | "exp" => {
                    self.expect(Token::LParen)?;
                    let arg = Box::new(self.expr()?);
                    self.expect(Token::RParen)?;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Exp(arg),
                    })
                }
                _ => {
                    let idx = name
                        .strip_prefix('x')
                        .and_then(|d| d.parse::<usize>().ok())
                        .ok_or_else(|| ParseError::UnknownIdentifier { name: name.clone() })?;
                    if idx == 0 || idx > self.dim {
                        return Err(ParseError::VariableOutOfRange {
                            name,
                            dim: self.dim,
                        });
                    }
                    Ok(Expr::Var(idx - 1))
                }
            },
            Some((t, pos)) => Err(ParseError::UnexpectedToken {
                found: t.to_string(),
                pos,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-x1 + 2*x2 - 3/4", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0]), -1.0 + 4.0 - 0.75);
        let e = Expr::parse("-(x1 - x2) * -2", 2).unwrap();
        assert_eq!(e.eval(&[3.0, 1.0]), 4.0);
        let e = Expr::parse("1.5e-1 * exp(0) + sin(0) + cos(0)", 1).unwrap();
        assert!((e.eval(&[0.0]) - 1.15).abs() < 1e-15);
    }

    #[test]
    fn rejects_power_and_unknowns() {
        assert!(matches!(
            Expr::parse("x1^2", 1),
            Err(ParseError::PowerNotSupported { pos: 2 })
        ));
        assert!(matches!(
            Expr::parse("y + 1", 1),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("x3", 2),
            Err(ParseError::VariableOutOfRange { .. })
        ));
        assert!(matches!(Expr::parse("x1 +", 1), Err(ParseError::UnexpectedEnd)));
        assert!(matches!(
            Expr::parse("x1 x2", 2),
            Err(ParseError::UnexpectedToken { .. })
        ));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let e = Expr::parse("sin(x1*x2) / (1 + x1*x1) + exp(-x2) * cos(x1)", 2).unwrap();
        let p = [0.7, -0.4];
        for v in 0..2 {
            let d = e.derivative(v).eval(&p);
            let h = 1e-6;
            let mut lo = p;
            let mut hi = p;
            lo[v] -= h;
            hi[v] += h;
            let fd = (e.eval(&hi) - e.eval(&lo)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-8, "var {v}: {d} vs {fd}");
        }
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-x1 * (x2 - 0.5) / exp(x1) + -3", 2).unwrap();
        let again = Expr::parse(&e.to_string(), 2).unwrap();
        for p in [[0.1, 0.2], [-1.0, 3.0]] {
            assert_eq!(e.eval(&p), again.eval(&p));
        }
    }

    #[test]
    fn gradient_of_circle_is_exactly_orthogonal_to_rotation() {
        let l = Expr::parse("x1*x1 + x2*x2 - 1", 2).unwrap();
        let g = l.gradient(2);
        let (x, y) = (0.6, 0.8);
        let dot = g[0].eval(&[x, y]) * (-y) + g[1].eval(&[x, y]) * x;
        assert_eq!(dot, 0.0);
    }
}
