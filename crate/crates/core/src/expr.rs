//! Closed expression catalog for vector-field components and Lagrangians.
//!
//! Expressions are built from constants, coordinates, `+`, `*`, negation,
//! integer powers, `sin` and `cos`. That is enough for polynomial and
//! trigonometric fields, and it keeps differentiation symbolic so that Lie
//! brackets, Jacobians and Hamiltonian derivatives are exact.
//!
//! Text syntax accepted by [`Expr::parse`]:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*      // division by constants only
//! unary  := '-' unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 'pi' | name | ('sin'|'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names are resolved through a caller-supplied table, so `x1, x2` can map to
//! state coordinates and `u1, u2` to controls.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn pow(a: Expr, n: u32) -> Expr {
        match (n, a.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => a,
            (_, Some(c)) => Expr::Const(c.powi(n as i32)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn sin(a: Expr) -> Expr {
        match a.as_const() {
            Some(c) => Expr::Const(c.sin()),
            None => Expr::Sin(Box::new(a)),
        }
    }

    pub fn cos(a: Expr) -> Expr {
        match a.as_const() {
            Some(c) => Expr::Const(c.cos()),
            None => Expr::Cos(Box::new(a)),
        }
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Neg(a) => -a.eval(vars),
            Expr::Pow(a, n) => a.eval(vars).powi(*n as i32),
            Expr::Sin(a) => a.eval(vars).sin(),
            Expr::Cos(a) => a.eval(vars).cos(),
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(a, b) => Expr::add(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)),
            ),
            Expr::Neg(a) => Expr::neg(a.diff(var)),
            Expr::Pow(a, n) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::mul(
                    Expr::mul(Expr::Const(*n as f64), Expr::pow((**a).clone(), n - 1)),
                    da,
                )
            }
            Expr::Sin(a) => Expr::mul(Expr::cos((**a).clone()), a.diff(var)),
            Expr::Cos(a) => Expr::neg(Expr::mul(Expr::sin((**a).clone()), a.diff(var))),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Mul(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) => a.max_var(),
        }
    }

    /// True when the expression does not reference variable `var`.
    pub fn independent_of(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(i) => *i != var,
            Expr::Add(a, b) | Expr::Mul(a, b) => a.independent_of(var) && b.independent_of(var),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) => a.independent_of(var),
        }
    }

    /// Parse with the default naming `x1..x{dim}` for variables `0..dim`.
    pub fn parse_state(src: &str, dim: usize) -> Result<Expr> {
        Expr::parse(src, |name| state_var(name, dim))
    }

    /// Parse with `x1..x{m}` mapped to `0..m` and `u1..u{n}` mapped to `m..m+n`.
    pub fn parse_state_control(src: &str, m: usize, n: usize) -> Result<Expr> {
        Expr::parse(src, |name| {
            if let Some(i) = state_var(name, m) {
                return Some(i);
            }
            let idx: usize = name.strip_prefix('u')?.parse().ok()?;
            (1..=n).contains(&idx).then(|| m + idx - 1)
        })
    }

    pub fn parse<F>(src: &str, resolve: F) -> Result<Expr>
    where
        F: Fn(&str) -> Option<usize>,
    {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            resolve: &resolve,
        };
        let e = parser.expr()?;
        if parser.pos != tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in '{src}'"
            )));
        }
        Ok(e)
    }
}

fn state_var(name: &str, dim: usize) -> Option<usize> {
    let idx: usize = name.strip_prefix('x')?.parse().ok()?;
    (1..=dim).contains(&idx).then(|| idx - 1)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "v{i}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'a, F> {
    tokens: &'a [Token],
    pos: usize,
    resolve: &'a F,
}

impl<F> Parser<'_, F>
where
    F: Fn(&str) -> Option<usize>,
{
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat_op('+') {
                acc = Expr::add(acc, self.term()?);
            } else if self.eat_op('-') {
                acc = Expr::sub(acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_op('*') {
                acc = Expr::mul(acc, self.unary()?);
            } else if self.eat_op('/') {
                let den = self.unary()?;
                match den.as_const() {
                    Some(c) if c != 0.0 => acc = Expr::mul(acc, Expr::Const(1.0 / c)),
                    _ => {
                        return Err(Error::Expression(
                            "division is only supported by nonzero constants".into(),
                        ))
                    }
                }
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            Ok(Expr::neg(self.unary()?))
        } else if self.eat_op('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            match self.peek().cloned() {
                Some(Token::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= 64.0 => {
                    self.pos += 1;
                    Ok(Expr::pow(base, v as u32))
                }
                _ => Err(Error::Expression(
                    "exponent must be a non-negative integer literal".into(),
                )),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return Err(Error::Expression("missing ')'".into()));
                }
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "sin" | "cos" => {
                        if !self.eat_op('(') {
                            return Err(Error::Expression(format!("expected '(' after {name}")));
                        }
                        let arg = self.expr()?;
                        if !self.eat_op(')') {
                            return Err(Error::Expression("missing ')'".into()));
                        }
                        Ok(if name == "sin" {
                            Expr::sin(arg)
                        } else {
                            Expr::cos(arg)
                        })
                    }
                    _ => (self.resolve)(&name)
                        .map(Expr::Var)
                        .ok_or_else(|| Error::Expression(format!("unknown name '{name}'"))),
                }
            }
            other => Err(Error::Expression(format!(
                "unexpected token {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates_polynomial() {
        let e = Expr::parse_state("x1^2 + 3*x2 - 0.5", 2).unwrap();
        assert_eq!(e.eval(&[2.0, 1.0]), 6.5);
        let neg = Expr::parse_state("-x1^2", 1).unwrap();
        assert_eq!(neg.eval(&[3.0]), -9.0);
    }

    #[test]
    fn differentiates_trig_and_powers() {
        let e = Expr::parse_state("sin(x1)*x2^3 + cos(2*x1)", 2).unwrap();
        let dx1 = e.diff(0);
        let dx2 = e.diff(1);
        let p: [f64; 2] = [0.3, 1.7];
        let want1 = p[0].cos() * p[1].powi(3) - 2.0 * (2.0 * p[0]).sin();
        let want2 = 3.0 * p[0].sin() * p[1].powi(2);
        assert!((dx1.eval(&p) - want1).abs() < 1e-14);
        assert!((dx2.eval(&p) - want2).abs() < 1e-14);
    }

    #[test]
    fn constant_folding_keeps_zero_derivatives_small() {
        let e = Expr::parse_state("5", 2).unwrap();
        assert!(e.diff(0).is_zero());
        let x = Expr::parse_state("x1", 2).unwrap();
        assert!(x.diff(1).is_zero());
        assert_eq!(x.diff(0).as_const(), Some(1.0));
    }

    #[test]
    fn rejects_unknown_names_and_variable_division() {
        assert!(Expr::parse_state("x3", 2).is_err());
        assert!(Expr::parse_state("1/x1", 2).is_err());
        assert!(Expr::parse_state("x1^x2", 2).is_err());
        assert!(Expr::parse_state("(x1", 2).is_err());
    }

    #[test]
    fn control_names_follow_state_block() {
        let e = Expr::parse_state_control("u1^2/2 + 1 - cos(x1)", 1, 1).unwrap();
        assert!((e.eval(&[0.0, 2.0]) - 2.0).abs() < 1e-15);
        assert!(e.independent_of(5));
        assert!(!e.independent_of(1));
    }

    #[test]
    fn scientific_literals() {
        let e = Expr::parse_state("1e-3*x1 + 2.5E2", 1).unwrap();
        assert!((e.eval(&[1000.0]) - 251.0).abs() < 1e-12);
    }
}
