//! Tiny arithmetic expressions over chart coordinates.
//!
//! Coefficient fields (metric entries, drift components, measure densities)
//! are written in config files as strings like `"1 + 0.5*x^2"` or
//! `"4/(1 + x^2 + y^2)^2"`. The grammar is deliberately small: numbers,
//! the coordinates `x`, `y`, `z`, the constant `pi`, `+ - * /`, integer
//! powers `^`, unary minus and parentheses. Expressions are parsed once and
//! evaluated many times; symbolic partial derivatives are available so that
//! geodesic equations get exact coefficient gradients instead of finite
//! differences.

use crate::linalg::Point;
use std::fmt;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("parse error at offset {offset}: {message} (in `{source_text}`)")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
    pub source_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Coordinate index: 0 = x, 1 = y, 2 = z.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer power with exponent >= 0.
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    /// Parse from source text. `dim` bounds which coordinates are legal.
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
        Parser { src, bytes: src.as_bytes(), pos: 0, dim }.parse_all()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x.get(*i),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n as i32),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    pub fn derivative(&self, i: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Add(a, b) => simplify_add(a.derivative(i), b.derivative(i)),
            Sub(a, b) => simplify_sub(a.derivative(i), b.derivative(i)),
            Mul(a, b) => simplify_add(
                simplify_mul(a.derivative(i), (**b).clone()),
                simplify_mul((**a).clone(), b.derivative(i)),
            ),
            Div(a, b) => {
                // (a/b)' = a'/b - a b'/b^2
                let da = a.derivative(i);
                let db = b.derivative(i);
                simplify_sub(
                    simplify_div(da, (**b).clone()),
                    simplify_div(
                        simplify_mul((**a).clone(), db),
                        Pow(Box::new((**b).clone()), 2),
                    ),
                )
            }
            Neg(a) => match a.derivative(i) {
                Const(c) => Const(-c),
                d => Neg(Box::new(d)),
            },
            Pow(a, n) => {
                if *n == 0 {
                    Const(0.0)
                } else {
                    let da = a.derivative(i);
                    let inner = if *n == 1 {
                        Const(1.0)
                    } else {
                        Pow(Box::new((**a).clone()), n - 1)
                    };
                    simplify_mul(simplify_mul(Const(*n as f64), inner), da)
                }
            }
        }
    }

    /// True when no coordinate appears, i.e. the field is constant.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
            Expr::Neg(a) => a.is_constant(),
            Expr::Pow(a, _) => a.is_constant(),
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn simplify_add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        return Expr::Const(x + y);
    }
    Expr::Add(Box::new(a), Box::new(b))
}

fn simplify_sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        return Expr::Const(x - y);
    }
    if is_zero(&a) {
        return Expr::Neg(Box::new(b));
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

fn simplify_mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Const(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        return Expr::Const(x * y);
    }
    Expr::Mul(Box::new(a), Box::new(b))
}

fn simplify_div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return Expr::Const(0.0);
    }
    if is_one(&b) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(0) => write!(f, "x"),
            Expr::Var(1) => write!(f, "y"),
            Expr::Var(2) => write!(f, "z"),
            Expr::Var(_) => unreachable!(),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a}*{b})"),
            Expr::Div(a, b) => write!(f, "({a}/{b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "{a}^{n}"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn err(&self, message: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            message: message.to_string(),
            source_text: self.src.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Add(Box::new(acc), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Sub(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := factor (('*' | '/') factor)*
    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Mul(Box::new(acc), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Div(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    // factor := '-' factor | atom ('^' uint)?
    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected a non-negative integer exponent after `^`"));
            }
            let n: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    // atom := number | ident | '(' expr ')'
    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("expected a number, coordinate or `(`")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut seen_exp = false;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && !seen_exp {
                // scientific notation, optionally signed
                seen_exp = true;
                self.pos += 1;
                if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| self.err("malformed number"))
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let var = |i: usize| -> Result<Expr, ParseError> {
            if i < self.dim {
                Ok(Expr::Var(i))
            } else {
                Err(ParseError {
                    offset: start,
                    message: format!("coordinate `{name}` not available in dimension {}", self.dim),
                    source_text: self.src.to_string(),
                })
            }
        };
        match name {
            "x" => var(0),
            "y" => var(1),
            "z" => var(2),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            other => Err(ParseError {
                offset: start,
                message: format!("unknown identifier `{other}` (expected x, y, z or pi)"),
                source_text: self.src.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2(s: &str) -> Expr {
        Expr::parse(s, 2).unwrap()
    }

    #[test]
    fn arithmetic() {
        let x = Point::xy(2.0, 3.0);
        assert_eq!(p2("1 + 2*3").eval(&x), 7.0);
        assert_eq!(p2("x^2 + y").eval(&x), 7.0);
        assert_eq!(p2("-(x - y)^3").eval(&x), 1.0);
        assert_eq!(p2("4/(1 + x^2 + y^2)^2").eval(&x), 4.0 / 196.0);
        assert!((p2("2*pi").eval(&x) - std::f64::consts::TAU).abs() < 1e-15);
        assert_eq!(p2("1e-2 * x").eval(&x), 0.02);
    }

    #[test]
    fn derivatives() {
        let x = Point::xy(1.5, -0.5);
        let e = p2("x^3*y - 2*x + y^2");
        let dx = e.derivative(0);
        let dy = e.derivative(1);
        assert!((dx.eval(&x) - (3.0 * 1.5f64.powi(2) * -0.5 - 2.0)).abs() < 1e-14);
        assert!((dy.eval(&x) - (1.5f64.powi(3) + 2.0 * -0.5)).abs() < 1e-14);
    }

    #[test]
    fn quotient_derivative() {
        // d/dx [4/(1+x^2)^2] = -16x/(1+x^2)^3
        let e = Expr::parse("4/(1 + x^2)^2", 2).unwrap();
        let d = e.derivative(0);
        let x = Point::xy(0.7, 0.0);
        let expect = -16.0 * 0.7 / (1.0 + 0.49f64).powi(3);
        assert!((d.eval(&x) - expect).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("x + ", 2).is_err());
        assert!(Expr::parse("foo", 2).is_err());
        assert!(Expr::parse("z", 2).is_err(), "z must not parse in 2d");
        assert!(Expr::parse("x^-1", 2).is_err(), "negative exponents are not allowed");
        assert!(Expr::parse("x y", 2).is_err());
        let err = Expr::parse("1 + kapa", 2).unwrap_err();
        assert!(err.message.contains("kapa"));
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn constant_detection() {
        assert!(p2("3*(2 - 1)^2").is_constant());
        assert!(!p2("3*x").is_constant());
    }
}
