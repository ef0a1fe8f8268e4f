//! Canonical normal form for scalar expressions, used to decide symbolic
//! identities such as `d(d(w)) = 0`.
//!
//! An expression becomes a sum of monomials with float coefficients; a
//! monomial is a product of atoms (variables, `sin`/`cos`/`exp` of a
//! normalised argument, or the inverse of a multi-term polynomial) raised to
//! integer powers. This is not a complete simplifier, but products, sums and
//! the derivative rules used by [`Expr::diff`] all land on one representative.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use crate::expr::{Expr, Func};

const ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    Var(usize),
    Sin(Poly),
    Cos(Poly),
    Exp(Poly),
    Inv(Poly),
}

pub type Monomial = BTreeMap<Atom, i32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Poly {
    terms: BTreeMap<Monomial, OrderedFloat<f64>>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        p.push(Monomial::new(), c);
        p
    }

    fn atom(a: Atom) -> Self {
        let mut m = Monomial::new();
        m.insert(a, 1);
        let mut p = Poly::zero();
        p.push(m, 1.0);
        p
    }

    fn push(&mut self, m: Monomial, c: f64) {
        let entry = self.terms.entry(m).or_insert(OrderedFloat(0.0));
        entry.0 += c;
    }

    fn prune(mut self) -> Self {
        let scale = self.terms.values().map(|c| c.0.abs()).fold(0.0, f64::max).max(1.0);
        self.terms.retain(|_, c| c.0.abs() > ZERO * scale);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&Monomial::new()).map(|c| c.0),
            _ => None,
        }
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.push(m.clone(), c.0);
        }
        out.prune()
    }

    fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.push(m.clone(), c.0 * s);
        }
        out.prune()
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.push(mono_mul(ma, mb), ca.0 * cb.0);
            }
        }
        out.prune()
    }

    fn powi(&self, n: u32) -> Poly {
        let mut out = Poly::constant(1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Coefficients rounded so that arguments computed along different
    /// float paths compare equal.
    fn rounded(&self) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let v = c.0;
            let r = if v == 0.0 {
                0.0
            } else {
                let mag = 10f64.powi(11 - v.abs().log10().floor() as i32);
                (v * mag).round() / mag
            };
            out.push(m.clone(), r);
        }
        out.prune()
    }

    fn leading_coefficient(&self) -> f64 {
        self.terms.values().next().map(|c| c.0).unwrap_or(0.0)
    }
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = a.clone();
    for (atom, e) in b {
        let entry = out.entry(atom.clone()).or_insert(0);
        *entry += e;
        if *entry == 0 {
            out.remove(atom);
        }
    }
    out
}

fn mono_inv(m: &Monomial) -> Monomial {
    m.iter().map(|(a, e)| (a.clone(), -e)).collect()
}

/// Converts an expression to its canonical polynomial form.
pub fn canonical(e: &Expr) -> Poly {
    match e {
        Expr::Num(v) => Poly::constant(*v).prune(),
        Expr::Pi => Poly::constant(std::f64::consts::PI),
        Expr::Var(i) => Poly::atom(Atom::Var(*i)),
        Expr::Neg(a) => canonical(a).scale(-1.0),
        Expr::Add(a, b) => canonical(a).add(&canonical(b)),
        Expr::Sub(a, b) => canonical(a).add(&canonical(b).scale(-1.0)),
        Expr::Mul(a, b) => canonical(a).mul(&canonical(b)),
        Expr::Div(a, b) => canonical(a).mul(&inverse(b)),
        Expr::Pow(a, n) => {
            if *n >= 0 {
                canonical(a).powi(*n as u32)
            } else {
                inverse(a).powi(n.unsigned_abs())
            }
        }
        Expr::Func(f, a) => function(*f, canonical(a)),
    }
}

fn function(f: Func, arg: Poly) -> Poly {
    if let Some(c) = arg.as_constant() {
        let v = match f {
            Func::Sin => c.sin(),
            Func::Cos => c.cos(),
            Func::Exp => c.exp(),
        };
        return Poly::constant(v).prune();
    }
    let arg = arg.rounded();
    match f {
        // sin is odd and cos even: normalise to a positive leading coefficient
        Func::Sin if arg.leading_coefficient() < 0.0 => Poly::atom(Atom::Sin(arg.scale(-1.0))).scale(-1.0),
        Func::Sin => Poly::atom(Atom::Sin(arg)),
        Func::Cos if arg.leading_coefficient() < 0.0 => Poly::atom(Atom::Cos(arg.scale(-1.0))),
        Func::Cos => Poly::atom(Atom::Cos(arg)),
        Func::Exp => Poly::atom(Atom::Exp(arg)),
    }
}

/// Canonical form of `1 / e`, factoring through products and powers so that
/// `1/(a*b)^2` and `(1/a)^2 (1/b)^2` agree.
fn inverse(e: &Expr) -> Poly {
    match e {
        Expr::Neg(a) => inverse(a).scale(-1.0),
        Expr::Mul(a, b) => inverse(a).mul(&inverse(b)),
        Expr::Div(a, b) => canonical(b).mul(&inverse(a)),
        Expr::Pow(a, n) => {
            if *n >= 0 {
                inverse(a).powi(*n as u32)
            } else {
                canonical(a).powi(n.unsigned_abs())
            }
        }
        _ => {
            let p = canonical(e);
            if p.len() == 1 {
                let (m, c) = p.terms.iter().next().expect("one term");
                let mut out = Poly::zero();
                out.push(mono_inv(m), 1.0 / c.0);
                return out;
            }
            let lead = p.leading_coefficient();
            Poly::atom(Atom::Inv(p.scale(1.0 / lead).rounded())).scale(1.0 / lead)
        }
    }
}

/// True when `e` canonicalises to the zero polynomial.
pub fn is_identically_zero(e: &Expr) -> bool {
    canonical(e).is_zero()
}

/// True when `a - b` canonicalises to zero.
pub fn equivalent(a: &Expr, b: &Expr) -> bool {
    canonical(a).add(&canonical(b).scale(-1.0)).is_zero()
}
