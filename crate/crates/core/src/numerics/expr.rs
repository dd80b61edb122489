//! The weight expression language.
//!
//! Weights, kernel coefficients and multipliers are written as small
//! arithmetic expressions in the single variable `x`:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | func '(' expr ')' | '(' expr ')'
//! func    := 'exp' | 'log' | 'abs'
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`. `log` is the natural logarithm.
//! Whitespace is ignored.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::jet::Jet;
use super::scalar::Scalar;
use super::wide::Wide;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("empty expression")]
    Empty,
}

impl ParseError {
    /// Byte offset of the first error, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => Some(*offset),
            ParseError::Empty => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Exp,
    Log,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Num(_) | Node::Var | Node::Call(..) => 5,
        }
    }

    fn has_var(&self) -> bool {
        match self {
            Node::Var => true,
            Node::Num(_) => false,
            Node::Neg(a) | Node::Call(_, a) => a.has_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.has_var() || b.has_var()
            }
        }
    }

    fn eval<T: Scalar>(&self, x: T) -> Option<T> {
        match self {
            Node::Num(c) => T::constant(*c),
            Node::Var => Some(x),
            Node::Neg(a) => a.eval(x)?.neg(),
            Node::Add(a, b) => a.eval(x)?.add(b.eval(x)?),
            Node::Sub(a, b) => a.eval(x)?.sub(b.eval(x)?),
            Node::Mul(a, b) => a.eval(x)?.mul(b.eval(x)?),
            Node::Div(a, b) => a.eval(x)?.div(b.eval(x)?),
            Node::Pow(a, b) => {
                let base = a.eval(x)?;
                let p = b.eval(x)?;
                if p.is_constant() {
                    base.powf(p.value())
                } else {
                    base.ln()?.mul(p)?.exp()
                }
            }
            Node::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }

    fn write(&self, out: &mut String) {
        let wrap = |n: &Node, needs: bool, out: &mut String| {
            if needs {
                out.push('(');
                n.write(out);
                out.push(')');
            } else {
                n.write(out);
            }
        };
        match self {
            Node::Num(c) => out.push_str(&format!("{c}")),
            Node::Var => out.push('x'),
            Node::Neg(a) => {
                out.push('-');
                wrap(a, a.precedence() < 3, out);
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                wrap(a, a.precedence() < 1, out);
                out.push(if matches!(self, Node::Add(..)) { '+' } else { '-' });
                wrap(b, b.precedence() <= 1, out);
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                wrap(a, a.precedence() < 2, out);
                out.push(if matches!(self, Node::Mul(..)) { '*' } else { '/' });
                wrap(b, b.precedence() <= 2, out);
            }
            Node::Pow(a, b) => {
                wrap(a, a.precedence() < 5, out);
                out.push('^');
                wrap(b, b.precedence() < 3, out);
            }
            Node::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(out);
                out.push(')');
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset, message: message.into() })
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' { Node::Add(lhs.into(), rhs.into()) } else { Node::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == b'*' { Node::Mul(lhs.into(), rhs.into()) } else { Node::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(self.unary()?.into()));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let start = match self.peek() {
            None => return self.syntax(self.pos, "unexpected end of input"),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            return match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    Ok(inner)
                }
                _ => self.syntax(self.pos, "expected `)`"),
            };
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
            let func = match name {
                "x" => return Ok(Node::Var),
                "exp" => Func::Exp,
                "log" => Func::Log,
                "abs" => Func::Abs,
                _ => return Err(ParseError::UnknownIdentifier { offset: start, name: name.to_string() }),
            };
            if self.peek() != Some(b'(') {
                return self.syntax(self.pos, format!("expected `(` after `{name}`"));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return self.syntax(self.pos, "expected `)`");
            }
            self.pos += 1;
            return Ok(Node::Call(func, arg.into()));
        }
        self.syntax(start, format!("unexpected character `{}`", c as char))
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return self.syntax(start, "malformed number");
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2exp(x)` is not a number with an exponent
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Num(v)),
            _ => self.syntax(start, format!("number `{text}` out of range")),
        }
    }
}

/// A parsed expression in `x`, keeping the source text it came from.
#[derive(Clone, Debug)]
pub struct WeightExpr {
    source: String,
    ast: Node,
}

impl PartialEq for WeightExpr {
    fn eq(&self, o: &Self) -> bool {
        self.ast == o.ast
    }
}

/// Parses a DSL expression; see the module docs for the grammar.
pub fn parse_weight(source: &str) -> Result<WeightExpr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let ast = p.expr()?;
    if let Some(c) = p.peek() {
        return p.syntax(p.pos, format!("unexpected `{}`", c as char));
    }
    Ok(WeightExpr { source: source.to_string(), ast })
}

impl WeightExpr {
    pub fn from_node(ast: Node) -> WeightExpr {
        let mut source = String::new();
        ast.write(&mut source);
        WeightExpr { source, ast }
    }

    pub fn constant(c: f64) -> WeightExpr {
        if c < 0.0 {
            WeightExpr::from_node(Node::Neg(Node::Num(-c).into()))
        } else {
            WeightExpr::from_node(Node::Num(c))
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    /// Canonical text; reparses to the same tree.
    pub fn print(&self) -> String {
        let mut s = String::new();
        self.ast.write(&mut s);
        s
    }

    /// True when the expression does not mention `x`.
    pub fn is_constant(&self) -> bool {
        !self.ast.has_var()
    }

    /// True when the expression is identically zero as a constant.
    pub fn is_zero_constant(&self) -> bool {
        self.is_constant() && self.ast.eval::<f64>(1.0) == Some(0.0)
    }

    /// Plain evaluation; `None` off the domain or outside the `f64` range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if let Some(v) = self.ast.eval::<f64>(x) {
            return Some(v);
        }
        let w = self.eval_wide(x)?;
        let v = w.to_f64();
        v.is_finite().then_some(v)
    }

    /// Evaluation with an unbounded exponent range.
    pub fn eval_wide(&self, x: f64) -> Option<Wide> {
        if let Some(v) = self.ast.eval::<f64>(x) {
            return Wide::from_f64(v);
        }
        self.ast.eval::<Wide>(Wide::from_f64(x)?)
    }

    /// `f(x), f'(x), ..., f^{(order)}(x)` by forward-mode differentiation.
    pub fn derivatives(&self, x: f64, order: usize) -> Option<Vec<Wide>> {
        if let Some(j) = self.ast.eval::<Jet<f64>>(Jet::variable(x, order)) {
            return (0..=order).map(|k| j.derivative(k).and_then(Wide::from_f64)).collect();
        }
        let j = self.ast.eval::<Jet<Wide>>(Jet::variable(Wide::from_f64(x)?, order))?;
        (0..=order).map(|k| j.derivative(k)).collect()
    }

    /// `self * other` as a new tree.
    pub fn times(&self, other: &WeightExpr) -> WeightExpr {
        WeightExpr::from_node(Node::Mul(self.ast.clone().into(), other.ast.clone().into()))
    }

    /// `self^p` as a new tree.
    pub fn pow(&self, p: f64) -> WeightExpr {
        let exp = if p < 0.0 { Node::Neg(Node::Num(-p).into()) } else { Node::Num(p) };
        WeightExpr::from_node(Node::Pow(self.ast.clone().into(), exp.into()))
    }

    /// `x^k * self`.
    pub fn times_power_of_x(&self, k: u32) -> WeightExpr {
        if k == 0 {
            return self.clone();
        }
        let xk = Node::Pow(Node::Var.into(), Node::Num(k as f64).into());
        WeightExpr::from_node(Node::Mul(xk.into(), self.ast.clone().into()))
    }

    /// Checks positivity and finiteness on a log grid spanning `[2^-20, 2^40]`.
    pub fn validate_weight(&self) -> Result<(), f64> {
        for k in -80..=160 {
            let x = 2f64.powf(k as f64 / 4.0);
            match self.eval_wide(x) {
                Some(v) if v > Wide::ZERO => {}
                _ => return Err(x),
            }
        }
        Ok(())
    }
}

impl fmt::Display for WeightExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for WeightExpr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_weight(s)
    }
}

impl Serialize for WeightExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for WeightExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_weight(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluates_exponential() {
        let w = parse_weight("exp(-x)").unwrap();
        assert!((w.eval(1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn evaluates_power_log_weight_at_zero() {
        let w = parse_weight("(1+x)^2 * log(2+x)").unwrap();
        assert!((w.eval(0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dangling_power_reports_offset() {
        let err = parse_weight("x^(").unwrap_err();
        assert_eq!(err.offset(), Some(3));
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn unknown_identifier_is_tagged() {
        let err = parse_weight("1 + sin(x)").unwrap_err();
        assert_eq!(err, ParseError::UnknownIdentifier { offset: 4, name: "sin".into() });
        assert_eq!(parse_weight("   ").unwrap_err(), ParseError::Empty);
        assert!(parse_weight("x)").is_err());
        assert!(parse_weight("exp x").is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        let w = parse_weight("-x^2").unwrap();
        assert_eq!(w.eval(3.0), Some(-9.0));
        let w = parse_weight("2^3^2").unwrap();
        assert_eq!(w.eval(0.0), Some(512.0));
        let w = parse_weight("8/2/2 - 1 - 1").unwrap();
        assert_eq!(w.eval(0.0), Some(0.0));
        let w = parse_weight("x^-2").unwrap();
        assert_eq!(w.eval(2.0), Some(0.25));
        let w = parse_weight("2e3 * 1.5E-3").unwrap();
        assert_eq!(w.eval(0.0), Some(3.0));
    }

    #[test]
    fn domain_errors_are_none() {
        assert_eq!(parse_weight("log(x - 1)").unwrap().eval(0.5), None);
        assert_eq!(parse_weight("1/(x - 1)").unwrap().eval(1.0), None);
        assert_eq!(parse_weight("(x-2)^0.5").unwrap().eval(1.0), None);
        assert_eq!(parse_weight("(x-2)^3").unwrap().eval(1.0), Some(-1.0));
    }

    #[test]
    fn wide_evaluation_survives_overflow() {
        let w = parse_weight("exp(x) * exp(-x) * x").unwrap();
        assert_eq!(w.eval(5000.0), Some(5000.0));
        let big = parse_weight("exp(2*x)").unwrap().eval_wide(1.0e6).unwrap();
        assert!((big.ln_abs() - 2.0e6).abs() < 1e-6);
        let tiny = parse_weight("5*exp(-x)").unwrap().eval_wide(800.0).unwrap();
        assert!((tiny.ln_abs() - (5f64.ln() - 800.0)).abs() < 1e-12);
    }

    #[test]
    fn forward_mode_derivatives() {
        // (x e^x)'' = (x + 2) e^x
        let w = parse_weight("x*exp(x)").unwrap();
        let d = w.derivatives(0.7, 2).unwrap();
        assert!((d[2].to_f64() - 2.7 * 0.7f64.exp()).abs() < 1e-13);
        // (1+x)^{-1/2}: f' = -1/2 (1+x)^{-3/2}
        let w = parse_weight("(1+x)^(-0.5)").unwrap();
        let d = w.derivatives(3.0, 1).unwrap();
        assert!((d[1].to_f64() + 0.5 / 8.0).abs() < 1e-15);
        // x^x: derivative x^x (ln x + 1)
        let w = parse_weight("x^x").unwrap();
        let d = w.derivatives(2.0, 1).unwrap();
        assert!((d[1].to_f64() - 4.0 * (2f64.ln() + 1.0)).abs() < 1e-13);
        // derivatives in the wide range
        let w = parse_weight("exp(x)").unwrap();
        let d = w.derivatives(1000.0, 3).unwrap();
        assert!((d[3].ln_abs() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn validate_weight_rejects_sign_changes() {
        assert!(parse_weight("(1+x)^(-4)").unwrap().validate_weight().is_ok());
        assert!(parse_weight("1 - x").unwrap().validate_weight().is_err());
        assert!(parse_weight("exp(-x)").unwrap().validate_weight().is_ok());
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Node::Num),
            Just(Node::Var),
            (0u32..20).prop_map(|k| Node::Num(k as f64)),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(a.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Add(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Sub(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Mul(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Div(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Pow(a.into(), b.into())),
                (inner.clone(), prop_oneof![Just(Func::Exp), Just(Func::Log), Just(Func::Abs)])
                    .prop_map(|(a, f)| Node::Call(f, a.into())),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(node in arb_node()) {
            let w = WeightExpr::from_node(node.clone());
            let back = parse_weight(&w.print()).unwrap();
            prop_assert_eq!(back.ast(), &node);
        }
    }
}
