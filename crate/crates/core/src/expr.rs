//! Closed-form coefficient expressions in `t`, `x` and `y`.
//!
//! Coefficients, initial data, exact solutions and test functions are written
//! in a small infix language: numbers, `pi`, the variables `t`, `x` (`x1`) and
//! `y` (`x2`), the operators `+ - * / ^`, and the functions `sin cos exp ln
//! sqrt abs tanh`. Expressions differentiate symbolically, which is how
//! manufactured forcing terms and test-function gradients are produced.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn num(v: f64) -> Self {
        Num(v)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("trailing input in '{s}'")));
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        match self {
            Num(v) => *v,
            Var(Var::T) => t,
            Var(Var::X) => x[0],
            Var(Var::Y) => x[1],
            Neg(a) => -a.eval(t, x),
            Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Pow(a, b) => {
                let base = a.eval(t, x);
                match **b {
                    Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(n as i32),
                    _ => base.powf(b.eval(t, x)),
                }
            }
            Func(f, a) => f.apply(a.eval(t, x)),
        }
    }

    pub fn is_const(&self) -> bool {
        match self {
            Num(_) => true,
            Var(_) => false,
            Neg(a) | Func(_, a) => a.is_const(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.is_const() && b.is_const(),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Num(_) => false,
            Var(w) => *w == v,
            Neg(a) | Func(_, a) => a.depends_on(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Num(0.0);
        }
        match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(v)),
            Add(a, b) => add(a.derivative(v), b.derivative(v)),
            Sub(a, b) => sub(a.derivative(v), b.derivative(v)),
            Mul(a, b) => add(
                mul(a.derivative(v), (**b).clone()),
                mul((**a).clone(), b.derivative(v)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(v), (**b).clone()),
                    mul((**a).clone(), b.derivative(v)),
                ),
                pow((**b).clone(), Num(2.0)),
            ),
            Pow(a, b) if !b.depends_on(v) => mul(
                mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), Num(1.0)))),
                a.derivative(v),
            ),
            Pow(a, b) => mul(
                self.clone(),
                add(
                    mul(b.derivative(v), Func(Func::Ln, a.clone())),
                    div(mul((**b).clone(), a.derivative(v)), (**a).clone()),
                ),
            ),
            Func(f, a) => {
                let inner = a.derivative(v);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => Func(Func::Cos, Box::new(a)),
                    Func::Cos => neg(Func(Func::Sin, Box::new(a))),
                    Func::Exp => Func(Func::Exp, Box::new(a)),
                    Func::Ln => div(Num(1.0), a),
                    Func::Sqrt => div(Num(0.5), Func(Func::Sqrt, Box::new(a))),
                    Func::Abs => div(a.clone(), Func(Func::Abs, Box::new(a))),
                    Func::Tanh => sub(Num(1.0), pow(Func(Func::Tanh, Box::new(a)), Num(2.0))),
                };
                mul(outer, inner)
            }
        }
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), _) if *x == 0.0 => b,
        (_, Num(y)) if *y == 0.0 => a,
        (Num(x), Num(y)) => Num(x + y),
        _ => Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Num(y)) if *y == 0.0 => a,
        (Num(x), _) if *x == 0.0 => neg(b),
        (Num(x), Num(y)) => Num(x - y),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), _) | (_, Num(x)) if *x == 0.0 => Num(0.0),
        (Num(x), _) if *x == 1.0 => b,
        (_, Num(y)) if *y == 1.0 => a,
        (Num(x), Num(y)) => Num(x * y),
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), _) if *x == 0.0 => Num(0.0),
        (_, Num(y)) if *y == 1.0 => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match &b {
        Num(y) if *y == 1.0 => a,
        Num(y) if *y == 0.0 => Num(1.0),
        _ => Pow(Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Num(x) => Num(-x),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "({v:?})"),
            Num(v) => write!(f, "{v:?}"),
            Var(Var::T) => f.write_str("t"),
            Var(Var::X) => f.write_str("x"),
            Var(Var::Y) => f.write_str("y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
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
                .map_err(|_| Error::Expr(format!("bad number '{text}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' in '{s}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!("expected '{op}' at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Add(Box::new(lhs), Box::new(rhs))
            } else {
                Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Num(v) => Num(-v),
                other => Neg(Box::new(other)),
            });
        }
        if self.peek_op() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Num(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "t" => Ok(Var(Var::T)),
                "x" | "x1" => Ok(Var(Var::X)),
                "y" | "x2" => Ok(Var(Var::Y)),
                "pi" => Ok(Num(std::f64::consts::PI)),
                other => {
                    let func = Func::from_name(other)
                        .ok_or_else(|| Error::Expr(format!("unknown identifier '{other}'")))?;
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Func(func, Box::new(arg)))
                }
            },
            Token::Op(c) => Err(Error::Expr(format!("unexpected '{c}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn evaluates_basic_forms() {
        let e = Expr::parse("1 + 0.5*sin(pi*x)").unwrap();
        assert_relative_eq!(e.eval(0.0, [0.5, 0.0]), 1.5);
        let e = Expr::parse("exp(-pi^2*t)*cos(pi*x)").unwrap();
        assert_relative_eq!(e.eval(0.1, [0.0, 0.0]), (-std::f64::consts::PI.powi(2) * 0.1).exp());
        let e = Expr::parse("-2^2").unwrap();
        assert_relative_eq!(e.eval(0.0, [0.0; 2]), -4.0);
        let e = Expr::parse("x2 - y + 3e-1").unwrap();
        assert_relative_eq!(e.eval(0.0, [0.0, 7.0]), 0.3);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("(1").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "x^3*y - sin(pi*x)*cos(2*y)",
            "exp(-t)*(1 + 0.3*cos(pi*x))",
            "sqrt(1 + x^2)/(2 + y)",
            "tanh(x - t) + ln(2 + x*y)",
            "(1 + x)^(1 + y)",
        ];
        let (t, x) = (0.3, [0.4, 0.7]);
        let h = 1e-6;
        for src in cases {
            let e = Expr::parse(src).unwrap();
            for (v, shift) in [(Var::X, [h, 0.0, 0.0]), (Var::Y, [0.0, h, 0.0]), (Var::T, [0.0, 0.0, h])] {
                let d = e.derivative(v).eval(t, x);
                let fp = e.eval(t + shift[2], [x[0] + shift[0], x[1] + shift[1]]);
                let fm = e.eval(t - shift[2], [x[0] - shift[0], x[1] - shift[1]]);
                assert_relative_eq!(d, (fp - fm) / (2.0 * h), epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-10.0f64..10.0).prop_map(Num),
            Just(Var(Var::T)),
            Just(Var(Var::X)),
            Just(Var(Var::Y)),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Div(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Func(Func::Sin, Box::new(a))),
                inner.prop_map(|a| Neg(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(e in arb_expr()) {
            let parsed = Expr::parse(&e.to_string()).unwrap();
            let again = Expr::parse(&parsed.to_string()).unwrap();
            prop_assert_eq!(&parsed, &again);
            let (a, b) = (e.eval(0.3, [0.2, 0.9]), parsed.eval(0.3, [0.2, 0.9]));
            prop_assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}
