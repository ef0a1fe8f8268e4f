//! Scalar expressions: parser, printer, evaluator and symbolic derivative.
//!
//! Variables are coordinate names. `x, y, z, w` are ambient coordinates and
//! `s, t, u` are reference-simplex coordinates; each occupies a fixed slot so
//! that one evaluation buffer serves both.
//!
//! Grammar:
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' signed_int)?
//! primary := number | 'pi' | ident | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp'
//! ```

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

pub const VAR_NAMES: [&str; 7] = ["x", "y", "z", "w", "s", "t", "u"];
/// Slot of the first reference coordinate `s`.
pub const REF_OFFSET: usize = 4;
pub const N_SLOTS: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("variable `{0}` is unbound")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

pub fn var_slot(name: &str) -> Option<usize> {
    VAR_NAMES.iter().position(|v| *v == name)
}

// Smart constructors with light constant folding.

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn var(slot: usize) -> Expr {
    Expr::Var(slot)
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(x), b) if x == 0.0 => b,
        (a, Expr::Num(y)) if y == 0.0 => a,
        (a, Expr::Neg(b)) => sub(a, *b),
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (Expr::Num(x), b) if x == 0.0 => neg(b),
        (a, Expr::Num(y)) if y == 0.0 => a,
        (a, Expr::Neg(b)) => add(a, *b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(x), _) | (_, Expr::Num(x)) if x == 0.0 => Expr::Num(0.0),
        (Expr::Num(x), b) if x == 1.0 => b,
        (a, Expr::Num(y)) if y == 1.0 => a,
        (Expr::Num(x), b) if x == -1.0 => neg(b),
        (a, Expr::Num(y)) if y == -1.0 => neg(a),
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), _) if x == 0.0 => Expr::Num(0.0),
        (a, Expr::Num(y)) if y == 1.0 => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (a, n) {
        (_, 0) => Expr::Num(1.0),
        (a, 1) => a,
        (Expr::Num(x), n) if x != 0.0 || n > 0 => Expr::Num(x.powi(n)),
        (a, n) => Expr::Pow(Box::new(a), n),
    }
}

pub fn func(f: Func, a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(f.apply(x)),
        a => Expr::Func(f, Box::new(a)),
    }
}

impl Expr {
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Evaluates with `vars[slot]` bound; division by zero is an error.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(i) => *vars.get(*i).ok_or_else(|| ExprError::Unbound(slot_name(*i)))?,
            Expr::Neg(a) => -a.eval(vars)?,
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => {
                let d = b.eval(vars)?;
                if d == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                a.eval(vars)? / d
            }
            Expr::Pow(a, n) => {
                let base = a.eval(vars)?;
                if base == 0.0 && *n < 0 {
                    return Err(ExprError::DivisionByZero);
                }
                base.powi(*n)
            }
            Expr::Func(f, a) => f.apply(a.eval(vars)?),
        })
    }

    /// Evaluation without domain checks (IEEE semantics), for hot loops whose
    /// callers check finiteness of the aggregate.
    pub fn eval_fast(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval_fast(vars),
            Expr::Add(a, b) => a.eval_fast(vars) + b.eval_fast(vars),
            Expr::Sub(a, b) => a.eval_fast(vars) - b.eval_fast(vars),
            Expr::Mul(a, b) => a.eval_fast(vars) * b.eval_fast(vars),
            Expr::Div(a, b) => a.eval_fast(vars) / b.eval_fast(vars),
            Expr::Pow(a, n) => a.eval_fast(vars).powi(*n),
            Expr::Func(f, a) => f.apply(a.eval_fast(vars)),
        }
    }

    /// Symbolic partial derivative with respect to the variable in `slot`.
    pub fn diff(&self, slot: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Pi => num(0.0),
            Expr::Var(i) => num(if *i == slot { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(slot)),
            Expr::Add(a, b) => add(a.diff(slot), b.diff(slot)),
            Expr::Sub(a, b) => sub(a.diff(slot), b.diff(slot)),
            Expr::Mul(a, b) => add(mul(a.diff(slot), (**b).clone()), mul((**a).clone(), b.diff(slot))),
            Expr::Div(a, b) => {
                // a'/b - a b'/b^2
                let first = div(a.diff(slot), (**b).clone());
                let db = b.diff(slot);
                if db.is_zero() {
                    first
                } else {
                    sub(first, div(mul((**a).clone(), db), pow((**b).clone(), 2)))
                }
            }
            Expr::Pow(a, n) => {
                let da = a.diff(slot);
                if da.is_zero() {
                    return num(0.0);
                }
                mul(mul(num(*n as f64), pow((**a).clone(), n - 1)), da)
            }
            Expr::Func(f, a) => {
                let da = a.diff(slot);
                if da.is_zero() {
                    return num(0.0);
                }
                let outer = match f {
                    Func::Sin => func(Func::Cos, (**a).clone()),
                    Func::Cos => neg(func(Func::Sin, (**a).clone())),
                    Func::Exp => func(Func::Exp, (**a).clone()),
                };
                mul(outer, da)
            }
        }
    }

    /// Replaces every variable `slot` by `subs[slot]` when present.
    pub fn substitute(&self, subs: &[Option<Expr>]) -> Expr {
        match self {
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Var(i) => match subs.get(*i) {
                Some(Some(e)) => e.clone(),
                _ => self.clone(),
            },
            Expr::Neg(a) => neg(a.substitute(subs)),
            Expr::Add(a, b) => add(a.substitute(subs), b.substitute(subs)),
            Expr::Sub(a, b) => sub(a.substitute(subs), b.substitute(subs)),
            Expr::Mul(a, b) => mul(a.substitute(subs), b.substitute(subs)),
            Expr::Div(a, b) => div(a.substitute(subs), b.substitute(subs)),
            Expr::Pow(a, n) => pow(a.substitute(subs), *n),
            Expr::Func(f, a) => func(*f, a.substitute(subs)),
        }
    }

    /// Sorted list of variable slots that occur.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = vec![];
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Num(_) | Expr::Pi => {}
            Expr::Var(i) => out.push(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(i) => write!(f, "{}", slot_name(*i)),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_prec(f, 3)
            }
            Expr::Add(a, b) => {
                a.write_prec(f, 1)?;
                write!(f, " + ")?;
                b.write_prec(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_prec(f, 1)?;
                write!(f, " - ")?;
                b.write_prec(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_prec(f, 2)?;
                write!(f, "*")?;
                b.write_prec(f, 3)
            }
            Expr::Div(a, b) => {
                a.write_prec(f, 2)?;
                write!(f, "/")?;
                b.write_prec(f, 3)
            }
            Expr::Pow(a, n) => {
                a.write_prec(f, 5)?;
                write!(f, "^{n}")
            }
            Expr::Func(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

fn slot_name(i: usize) -> String {
    VAR_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("v{i}"))
}

/// Canonical printer; `parse_expr(e.to_string())` reproduces parsed trees.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(ExprError::Syntax { offset: p.pos, message: "empty expression".into() });
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: String) -> ExprError {
        ExprError::Syntax { offset: self.pos, message }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(match self.unary()? {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            if matches!(self.src.get(self.pos), Some(b'-') | Some(b'+')) {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = start;
                return Err(self.error("expected an integer exponent".into()));
            }
            if matches!(self.src.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E')) {
                return Err(self.error("exponents must be integers".into()));
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            let n: i32 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("exponent `{text}` out of range"),
            })?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.error("unexpected end of input".into())),
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.error("expected `)`".into()));
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            let f = match name {
                "sin" => Some(Func::Sin),
                "cos" => Some(Func::Cos),
                "exp" => Some(Func::Exp),
                _ => None,
            };
            if let Some(f) = f {
                if self.peek() != Some(b'(') {
                    return Err(self.error(format!("expected `(` after `{name}`")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`".into()));
                }
                self.pos += 1;
                return Ok(Expr::Func(f, Box::new(arg)));
            }
            if name == "pi" {
                return Ok(Expr::Pi);
            }
            return match var_slot(name) {
                Some(slot) => Ok(Expr::Var(slot)),
                None => Err(ExprError::UnknownIdentifier { offset: start, name: name.to_string() }),
            };
        }
        Err(self.error(format!("unexpected `{}`", c as char)))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                // not an exponent after all (e.g. `2exp`); leave it to the caller
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::Syntax { offset: start, message: format!("malformed number `{text}`") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn parses_a_three_node_sum() {
        let e = p("sin(x)*y + 2");
        match &e {
            Expr::Add(a, b) => {
                assert!(matches!(**a, Expr::Mul(..)));
                assert_eq!(**b, Expr::Num(2.0));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(e.eval(&[0.5, 3.0, 0.0]).unwrap(), 0.5f64.sin() * 3.0 + 2.0);
    }

    #[test]
    fn syntax_error_points_at_the_operator() {
        match parse_expr("x + * y") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("q + 1"), Err(ExprError::UnknownIdentifier { offset: 0, .. })));
        assert!(matches!(parse_expr(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("x^1.5"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("(x"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("x)"), Err(ExprError::Syntax { offset: 1, .. })));
    }

    #[test]
    fn evaluation() {
        assert_eq!(p("exp(-(x^2))").eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(p("2^-2").eval(&[]).unwrap(), 0.25);
        assert_eq!(p("-x^2").eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("1e-3*2").eval(&[]).unwrap(), 2e-3);
        assert!((p("cos(pi)").eval(&[]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(p("1/x").eval(&[0.0]), Err(ExprError::DivisionByZero));
        assert!(matches!(p("y").eval(&[1.0]), Err(ExprError::Unbound(_))));
    }

    #[test]
    fn derivatives() {
        assert_eq!(p("x*y").diff(0), p("y"));
        assert_eq!(p("sin(x)").diff(0), p("cos(x)"));
        assert!(p("z").diff(0).is_zero());
        let d = p("x/(1 + y)").diff(1);
        let v = d.eval(&[2.0, 1.0]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn printer_round_trips() {
        for s in [
            "sin(x)*y + 2",
            "x - (y - z)",
            "x/(y*z)",
            "-x^2",
            "(-2)^3",
            "x*-2",
            "2^-3 + exp(-(x^2))",
            "-(x + y)*cos(pi*t)",
            "((x))",
            "a",
        ] {
            let Ok(e) = parse_expr(s) else { continue };
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{s} -> {printed}");
        }
    }

    #[test]
    fn substitution() {
        let e = p("x*y + z");
        let subs = vec![Some(p("s + t")), Some(num(2.0)), None];
        let r = e.substitute(&subs);
        assert_eq!(r.eval(&[0.0, 0.0, 1.0, 0.0, 0.25, 0.5]).unwrap(), 2.5);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(|v| Expr::Num((v * 100.0).round() / 100.0)),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
                inner.clone().prop_map(|a| Expr::Func(Func::Sin, Box::new(a))),
                inner.clone().prop_map(|a| Expr::Func(Func::Cos, Box::new(a))),
                inner.prop_map(|a| Expr::Neg(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let pt = [x, y, z];
            for slot in 0..3 {
                let h = 1e-5;
                let mut a = pt;
                let mut b = pt;
                a[slot] += h;
                b[slot] -= h;
                let fd = (e.eval_fast(&a) - e.eval_fast(&b)) / (2.0 * h);
                let exact = e.diff(slot).eval_fast(&pt);
                prop_assume!(exact.is_finite() && fd.is_finite() && exact.abs() < 1e4);
                let tol = 1e-7 * exact.abs().max(1.0) + 1e-9 * e.eval_fast(&pt).abs().max(1.0) * 1e3;
                prop_assert!((fd - exact).abs() <= tol, "{} d/d{}: fd {} exact {}", e, slot, fd, exact);
            }
        }

        #[test]
        fn printed_form_parses_to_same_value(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let back = parse_expr(&e.to_string()).unwrap();
            let pt = [x, y, z];
            let (a, b) = (e.eval_fast(&pt), back.eval_fast(&pt));
            prop_assume!(a.is_finite());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
