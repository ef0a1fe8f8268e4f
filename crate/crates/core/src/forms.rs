//! Lie-algebra-valued differential forms with symbolic coefficients.
//!
//! A form is a list of terms `c(x) e_b dx_I` where `e_b` is a basis element
//! of the target algebra and `I` a strictly increasing multi-index. Forms
//! over the ambient chart use the coordinate names `x, y, z, w`; forms pulled
//! back to a reference simplex use `s, t, u` (see [`crate::expr`]).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::canon;
use crate::chains::Simplex;
use crate::crossed::CrossedModule;
use crate::expr::{self, add, func, mul, neg, num, sub, Expr, ExprError, Func, N_SLOTS, REF_OFFSET};
use crate::lie::{GroupSpec, LieError, Mat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("form degree {0} is out of range 0..=3")]
    Degree(usize),
    #[error("differential index {index} out of range for ambient dimension {ambient}")]
    DxIndex { index: usize, ambient: usize },
    #[error("basis index {index} out of range for algebra of dimension {dim}")]
    Basis { index: usize, dim: usize },
    #[error("term has {got} differentials, form degree is {degree}")]
    TermDegree { got: usize, degree: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("algebra mismatch: expected {expected}, got {got}")]
    Spec { expected: String, got: String },
    #[error("gauge transformation needs ad^3 = -ad for basis element {0}")]
    UnsupportedGauge(usize),
    #[error("fake-flatness residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotFakeFlat { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormTerm {
    pub coeff: Expr,
    pub basis: usize,
    pub dx: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LieValuedForm {
    degree: usize,
    ambient_dim: usize,
    spec: Arc<GroupSpec>,
    coord_offset: usize,
    terms: Vec<FormTerm>,
}

/// Sorts `dx` in place and returns the permutation sign, or 0 when an index
/// repeats.
pub fn sort_with_sign(dx: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 1..dx.len() {
        let mut j = i;
        while j > 0 && dx[j - 1] > dx[j] {
            dx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if dx.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

/// Increasing multi-indices of length `p` drawn from `0..n`.
pub fn multi_indices(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, p, cur, out);
            cur.pop();
        }
    }
    let mut out = vec![];
    rec(0, n, p, &mut vec![], &mut out);
    out
}

/// Determinant of the minor `rows x cols` of the tangent list, computed so
/// that swapping two tangents negates the result bit-for-bit.
pub fn minor(tangents: &[&[f64]], rows: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => tangents[0][rows[0]],
        2 => {
            let (u, v) = (tangents[0], tangents[1]);
            u[rows[0]] * v[rows[1]] - u[rows[1]] * v[rows[0]]
        }
        3 => {
            let perms: [([usize; 3], bool); 6] = [
                ([0, 1, 2], true),
                ([1, 2, 0], true),
                ([2, 0, 1], true),
                ([0, 2, 1], false),
                ([2, 1, 0], false),
                ([1, 0, 2], false),
            ];
            let mut pos = [0.0; 3];
            let mut negs = [0.0; 3];
            let (mut ip, mut ineg) = (0, 0);
            for (perm, even) in perms {
                let mut f = [
                    tangents[0][rows[perm[0]]],
                    tangents[1][rows[perm[1]]],
                    tangents[2][rows[perm[2]]],
                ];
                f.sort_by(f64::total_cmp);
                let prod = f[0] * f[1] * f[2];
                if even {
                    pos[ip] = prod;
                    ip += 1;
                } else {
                    negs[ineg] = prod;
                    ineg += 1;
                }
            }
            pos.sort_by(f64::total_cmp);
            negs.sort_by(f64::total_cmp);
            (pos[0] + pos[1] + pos[2]) - (negs[0] + negs[1] + negs[2])
        }
        _ => panic!("minor of size > 3"),
    }
}

impl LieValuedForm {
    /// The zero form of the given degree on the ambient chart.
    pub fn zero(spec: Arc<GroupSpec>, ambient_dim: usize, degree: usize) -> Self {
        LieValuedForm { degree, ambient_dim, spec, coord_offset: 0, terms: vec![] }
    }

    /// Same, on reference coordinates `s, t, u`.
    pub fn zero_reference(spec: Arc<GroupSpec>, dim: usize, degree: usize) -> Self {
        LieValuedForm { degree, ambient_dim: dim, spec, coord_offset: REF_OFFSET, terms: vec![] }
    }

    pub fn from_terms(
        spec: Arc<GroupSpec>,
        ambient_dim: usize,
        degree: usize,
        terms: impl IntoIterator<Item = (Expr, usize, Vec<usize>)>,
    ) -> Result<Self, FormError> {
        if degree > 3 {
            return Err(FormError::Degree(degree));
        }
        if ambient_dim == 0 || ambient_dim > 4 {
            return Err(FormError::Dimension(format!("ambient dimension {ambient_dim} not in 1..=4")));
        }
        let mut f = Self::zero(spec, ambient_dim, degree);
        for (c, b, dx) in terms {
            f.push_term(c, b, dx)?;
        }
        Ok(f.normalized())
    }

    /// Parses coefficient strings; convenient for tests and examples.
    pub fn parse(
        spec: Arc<GroupSpec>,
        ambient_dim: usize,
        degree: usize,
        terms: &[(&str, usize, &[usize])],
    ) -> Result<Self, FormError> {
        let mut parsed = vec![];
        for (c, b, dx) in terms {
            parsed.push((expr::parse_expr(c)?, *b, dx.to_vec()));
        }
        Self::from_terms(spec, ambient_dim, degree, parsed)
    }

    /// Adds `coeff e_basis dx`; `dx` may be unsorted, the permutation sign is
    /// folded into the coefficient.
    pub fn push_term(&mut self, coeff: Expr, basis: usize, mut dx: Vec<usize>) -> Result<(), FormError> {
        if dx.len() != self.degree {
            return Err(FormError::TermDegree { got: dx.len(), degree: self.degree });
        }
        if basis >= self.spec.dim() {
            return Err(FormError::Basis { index: basis, dim: self.spec.dim() });
        }
        if let Some(&bad) = dx.iter().find(|&&i| i >= self.ambient_dim) {
            return Err(FormError::DxIndex { index: bad, ambient: self.ambient_dim });
        }
        let sign = sort_with_sign(&mut dx);
        if sign == 0 || coeff.is_zero() {
            return Ok(());
        }
        let coeff = if sign < 0 { neg(coeff) } else { coeff };
        self.terms.push(FormTerm { coeff, basis, dx });
        Ok(())
    }

    /// Merges terms with equal `(dx, basis)` and drops literal zeros.
    pub fn normalized(self) -> Self {
        let mut map: BTreeMap<(Vec<usize>, usize), Expr> = BTreeMap::new();
        for t in self.terms {
            let key = (t.dx, t.basis);
            let entry = map.remove(&key);
            let merged = match entry {
                Some(prev) => add(prev, t.coeff),
                None => t.coeff,
            };
            map.insert(key, merged);
        }
        let terms = map
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((dx, basis), coeff)| FormTerm { coeff, basis, dx })
            .collect();
        LieValuedForm { terms, ..self }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn terms(&self) -> &[FormTerm] {
        &self.terms
    }

    pub fn coord_offset(&self) -> usize {
        self.coord_offset
    }

    pub fn is_reference(&self) -> bool {
        self.coord_offset == REF_OFFSET
    }

    /// Structurally empty (no terms after normalisation).
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every coefficient canonicalises to zero.
    pub fn is_symbolically_zero(&self) -> bool {
        self.terms.iter().all(|t| canon::is_identically_zero(&t.coeff))
    }

    fn check_compatible(&self, other: &LieValuedForm) -> Result<(), FormError> {
        if *self.spec != *other.spec {
            return Err(FormError::Spec { expected: self.spec.name().into(), got: other.spec.name().into() });
        }
        if self.ambient_dim != other.ambient_dim || self.coord_offset != other.coord_offset {
            return Err(FormError::Dimension("forms live on different charts".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &LieValuedForm) -> Result<LieValuedForm, FormError> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(FormError::TermDegree { got: other.degree, degree: self.degree });
        }
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out.normalized())
    }

    pub fn scale(&self, s: f64) -> LieValuedForm {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff = mul(num(s), t.coeff.clone());
        }
        out.normalized()
    }

    fn var_buffer(&self, point: &[f64]) -> [f64; N_SLOTS] {
        let mut vars = [0.0; N_SLOTS];
        for (i, p) in point.iter().enumerate().take(self.ambient_dim) {
            vars[self.coord_offset + i] = *p;
        }
        vars
    }

    /// Algebra coordinates of `w(point)(tangents...)`.
    pub fn eval_coords(&self, point: &[f64], tangents: &[&[f64]]) -> Result<Vec<f64>, FormError> {
        if tangents.len() != self.degree {
            return Err(FormError::Dimension(format!("{} tangents for a {}-form", tangents.len(), self.degree)));
        }
        if point.len() < self.ambient_dim || tangents.iter().any(|t| t.len() < self.ambient_dim) {
            return Err(FormError::Dimension("point or tangent shorter than ambient dimension".into()));
        }
        let vars = self.var_buffer(point);
        let mut out = vec![0.0; self.spec.dim()];
        for t in &self.terms {
            let m = minor(tangents, &t.dx);
            if m != 0.0 {
                out[t.basis] += t.coeff.eval(&vars)? * m;
            }
        }
        Ok(out)
    }

    /// Unchecked variant for the integration loops.
    pub fn eval_coords_fast(&self, point: &[f64], tangents: &[&[f64]], out: &mut [f64]) {
        let vars = self.var_buffer(point);
        for t in &self.terms {
            let m = minor(tangents, &t.dx);
            if m != 0.0 {
                out[t.basis] += t.coeff.eval_fast(&vars) * m;
            }
        }
    }

    pub fn eval_matrix(&self, point: &[f64], tangents: &[&[f64]]) -> Result<Mat, FormError> {
        Ok(self.spec.from_coords(&self.eval_coords(point, tangents)?))
    }

    /// Coordinate-slot of ambient direction `i`.
    fn slot(&self, i: usize) -> usize {
        self.coord_offset + i
    }

    /// Exterior derivative. A result above the top degree is the zero form.
    pub fn exterior_d(&self) -> LieValuedForm {
        let degree = self.degree + 1;
        let mut out = LieValuedForm { degree, terms: vec![], ..self.clone() };
        if degree > self.ambient_dim || degree > 3 {
            return out;
        }
        for t in &self.terms {
            for j in 0..self.ambient_dim {
                if t.dx.contains(&j) {
                    continue;
                }
                let dc = t.coeff.diff(self.slot(j));
                if dc.is_zero() {
                    continue;
                }
                let mut dx = vec![j];
                dx.extend_from_slice(&t.dx);
                out.push_term(dc, t.basis, dx).expect("indices validated");
            }
        }
        out.normalized()
    }
}

/// `F = d alpha + 1/2 [alpha ^ alpha]`.
pub fn curvature(alpha: &LieValuedForm) -> Result<LieValuedForm, FormError> {
    if alpha.degree != 1 {
        return Err(FormError::TermDegree { got: alpha.degree, degree: 1 });
    }
    let spec = alpha.spec.clone();
    let mut out = alpha.exterior_d();
    if alpha.ambient_dim < 2 {
        return Ok(out);
    }
    for a in &alpha.terms {
        for b in &alpha.terms {
            if a.dx[0] == b.dx[0] {
                continue;
            }
            for k in 0..spec.dim() {
                let c = spec.structure_constant(a.basis, b.basis, k);
                if c == 0.0 {
                    continue;
                }
                let coeff = mul(num(0.5 * c), mul(a.coeff.clone(), b.coeff.clone()));
                out.push_term(coeff, k, vec![a.dx[0], b.dx[0]])?;
            }
        }
    }
    Ok(out.normalized())
}

/// `alpha |> beta` for a `g`-valued `p`-form and `h`-valued `q`-form, with the
/// standard wedge (cyclic sum for `p = 1, q = 2`).
pub fn act_wedge(cm: &CrossedModule, alpha: &LieValuedForm, beta: &LieValuedForm) -> Result<LieValuedForm, FormError> {
    let degree = alpha.degree + beta.degree;
    let mut out = LieValuedForm { degree, terms: vec![], ..beta.clone() };
    if degree > beta.ambient_dim || degree > 3 {
        return Ok(out);
    }
    let dh = cm.h().dim();
    for a in &alpha.terms {
        for b in &beta.terms {
            if b.dx.iter().any(|i| a.dx.contains(i)) {
                continue;
            }
            for k in 0..dh {
                let c = cm.act_tensor(a.basis, b.basis, k);
                if c == 0.0 {
                    continue;
                }
                let mut dx = a.dx.clone();
                dx.extend_from_slice(&b.dx);
                out.push_term(mul(num(c), mul(a.coeff.clone(), b.coeff.clone())), k, dx)?;
            }
        }
    }
    Ok(out.normalized())
}

/// Image of an `h`-valued form under `dphi`.
pub fn apply_dphi(cm: &CrossedModule, beta: &LieValuedForm) -> LieValuedForm {
    let d = cm.dphi_coords();
    let mut out = LieValuedForm { terms: vec![], spec: cm.g().clone(), ..beta.clone() };
    for t in &beta.terms {
        for a in 0..d.nrows() {
            let c = d[(a, t.basis)];
            if c != 0.0 {
                out.push_term(mul(num(c), t.coeff.clone()), a, t.dx.clone()).expect("validated");
            }
        }
    }
    out.normalized()
}

/// `H = d beta + alpha |> beta`.
pub fn three_curvature_of(cm: &CrossedModule, alpha: &LieValuedForm, beta: &LieValuedForm) -> Result<LieValuedForm, FormError> {
    beta.exterior_d().add(&act_wedge(cm, alpha, beta)?)
}

/// Fake-flat partner `beta = -dphi^+(F_alpha) + inert`.
pub fn fake_flat_beta(
    cm: &CrossedModule,
    alpha: &LieValuedForm,
    inert: Option<&LieValuedForm>,
) -> Result<LieValuedForm, FormError> {
    let f = curvature(alpha)?;
    let pinv = cm.dphi_pseudo_inverse();
    let mut beta = LieValuedForm { terms: vec![], spec: cm.h().clone(), ..f.clone() };
    for t in &f.terms {
        for k in 0..cm.h().dim() {
            let c = pinv[(k, t.basis)];
            if c != 0.0 {
                beta.push_term(mul(num(-c), t.coeff.clone()), k, t.dx.clone())?;
            }
        }
    }
    let mut beta = beta.normalized();
    if let Some(extra) = inert {
        // only the inert component is admissible without breaking fake-flatness
        let mut proj = LieValuedForm { terms: vec![], ..extra.clone() };
        let p = DMatrix::from_fn(cm.h().dim(), cm.h().dim(), |i, j| {
            let mut e = vec![0.0; cm.h().dim()];
            e[j] = 1.0;
            cm.inert_component_coords(&e)[i]
        });
        for t in &extra.terms {
            for k in 0..cm.h().dim() {
                let c = p[(k, t.basis)];
                if c.abs() > 1e-15 {
                    proj.push_term(mul(num(c), t.coeff.clone()), k, t.dx.clone())?;
                }
            }
        }
        beta = beta.add(&proj.normalized())?;
    }
    Ok(beta)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FakeFlatReport {
    pub max_residual: f64,
    pub samples: usize,
    pub opted_out: bool,
}

/// A 2-connection `(alpha, beta)` on a crossed module.
#[derive(Debug, Clone)]
pub struct TwoConnection {
    pub cm: Arc<CrossedModule>,
    pub alpha: LieValuedForm,
    pub beta: LieValuedForm,
    pub fake_flat_report: FakeFlatReport,
}

pub const FAKE_FLAT_TOLERANCE: f64 = 1e-8;

impl TwoConnection {
    /// Checks fake-flatness at `points`; fails unless it holds or the caller
    /// opts out (the opt-out is recorded in the report).
    pub fn new(
        cm: Arc<CrossedModule>,
        alpha: LieValuedForm,
        beta: LieValuedForm,
        points: &[Vec<f64>],
        opt_out: bool,
    ) -> Result<Self, FormError> {
        if alpha.degree != 1 || beta.degree != 2 {
            return Err(FormError::Dimension("alpha must be a 1-form and beta a 2-form".into()));
        }
        if *alpha.spec != **cm.g() {
            return Err(FormError::Spec { expected: cm.g().name().into(), got: alpha.spec.name().into() });
        }
        if *beta.spec != **cm.h() {
            return Err(FormError::Spec { expected: cm.h().name().into(), got: beta.spec.name().into() });
        }
        if alpha.ambient_dim != beta.ambient_dim {
            return Err(FormError::Dimension("alpha and beta on different charts".into()));
        }
        let residual = fake_flat_residual_of(&cm, &alpha, &beta, points)?;
        if residual > FAKE_FLAT_TOLERANCE && !opt_out {
            return Err(FormError::NotFakeFlat { residual, tolerance: FAKE_FLAT_TOLERANCE });
        }
        Ok(TwoConnection {
            cm,
            alpha,
            beta,
            fake_flat_report: FakeFlatReport { max_residual: residual, samples: points.len(), opted_out: opt_out },
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.alpha.ambient_dim
    }

    pub fn three_curvature(&self) -> Result<LieValuedForm, FormError> {
        three_curvature_of(&self.cm, &self.alpha, &self.beta)
    }
}

pub fn three_curvature(conn: &TwoConnection) -> Result<LieValuedForm, FormError> {
    conn.three_curvature()
}

/// Max over points and coordinate bivectors of `|F_alpha + dphi(beta)|`.
pub fn fake_flat_residual_of(
    cm: &CrossedModule,
    alpha: &LieValuedForm,
    beta: &LieValuedForm,
    points: &[Vec<f64>],
) -> Result<f64, FormError> {
    let total = curvature(alpha)?.add(&apply_dphi(cm, beta))?;
    let n = alpha.ambient_dim;
    let mut worst: f64 = 0.0;
    for p in points {
        for pair in multi_indices(n, 2) {
            let mut u = vec![0.0; n];
            let mut v = vec![0.0; n];
            u[pair[0]] = 1.0;
            v[pair[1]] = 1.0;
            let c = total.eval_coords(p, &[&u, &v])?;
            worst = worst.max(cm.g().coords_norm(&c));
        }
    }
    Ok(worst)
}

pub fn fake_flat_residual(conn: &TwoConnection, points: &[Vec<f64>]) -> Result<f64, FormError> {
    fake_flat_residual_of(&conn.cm, &conn.alpha, &conn.beta, points)
}

/// Pulls `w` back along a simplex; the result lives on the simplex's
/// reference coordinates `s, t, u`.
pub fn pullback(w: &LieValuedForm, f: &Simplex) -> Result<LieValuedForm, FormError> {
    if w.is_reference() {
        return Err(FormError::Dimension("form is already on reference coordinates".into()));
    }
    if f.ambient_dim() != w.ambient_dim {
        return Err(FormError::Dimension(format!(
            "simplex maps into dimension {}, form lives in dimension {}",
            f.ambient_dim(),
            w.ambient_dim
        )));
    }
    let n = f.dim();
    let comps = f.reference_components();
    let jac: Vec<Vec<Expr>> = comps.iter().map(|c| (0..n).map(|r| c.diff(REF_OFFSET + r)).collect()).collect();
    let mut subs: Vec<Option<Expr>> = vec![None; N_SLOTS];
    for (i, c) in comps.iter().enumerate() {
        subs[i] = Some(c.clone());
    }
    let mut out = LieValuedForm::zero_reference(w.spec.clone(), n.max(1), w.degree);
    if w.degree > n {
        return Ok(out);
    }
    let sign = f.orientation() as f64;
    for t in &w.terms {
        let c = t.coeff.substitute(&subs);
        if c.is_zero() {
            continue;
        }
        for rs in multi_indices(n, w.degree) {
            let det = symbolic_minor(&jac, &t.dx, &rs);
            if det.is_zero() {
                continue;
            }
            out.push_term(mul(num(sign), mul(c.clone(), det)), t.basis, rs)?;
        }
    }
    Ok(out.normalized())
}

fn symbolic_minor(jac: &[Vec<Expr>], rows: &[usize], cols: &[usize]) -> Expr {
    let j = |r: usize, c: usize| jac[rows[r]][cols[c]].clone();
    match rows.len() {
        0 => num(1.0),
        1 => j(0, 0),
        2 => sub(mul(j(0, 0), j(1, 1)), mul(j(0, 1), j(1, 0))),
        3 => {
            let m2 = |r1: usize, r2: usize, c1: usize, c2: usize| sub(mul(j(r1, c1), j(r2, c2)), mul(j(r1, c2), j(r2, c1)));
            add(
                sub(mul(j(0, 0), m2(1, 2, 1, 2)), mul(j(0, 1), m2(1, 2, 0, 2))),
                mul(j(0, 2), m2(1, 2, 0, 1)),
            )
        }
        _ => unreachable!("degree <= 3"),
    }
}

/// A `G`-valued map written as an ordered product of one-parameter
/// subgroups, `g(x) = exp(theta_1(x) E_b1) ... exp(theta_n(x) E_bn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeMap {
    pub factors: Vec<(usize, Expr)>,
}

impl GaugeMap {
    pub fn identity() -> Self {
        GaugeMap { factors: vec![] }
    }

    /// Numeric value of `g` at an ambient point.
    pub fn eval(&self, spec: &GroupSpec, point: &[f64]) -> Result<Mat, FormError> {
        let mut vars = [0.0; N_SLOTS];
        vars[..point.len().min(4)].copy_from_slice(&point[..point.len().min(4)]);
        let mut g = spec.identity();
        for (b, theta) in &self.factors {
            let th = theta.eval(&vars)?;
            let mut c = vec![0.0; spec.dim()];
            c[*b] = th;
            g *= spec.exp_mat(&spec.from_coords(&c))?;
        }
        Ok(g)
    }
}

type SymMat = Vec<Vec<Expr>>;

fn sym_identity(n: usize) -> SymMat {
    (0..n).map(|i| (0..n).map(|j| num(if i == j { 1.0 } else { 0.0 })).collect()).collect()
}

fn sym_matmul(a: &SymMat, b: &SymMat) -> SymMat {
    let n = a.len();
    let m = if n == 0 { 0 } else { b[0].len() };
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = num(0.0);
                    for (k, bk) in b.iter().enumerate() {
                        acc = add(acc, mul(a[i][k].clone(), bk[j].clone()));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `exp(theta T)` for a matrix with `T^3 = -T`, i.e.
/// `I + sin(theta) T + (1 - cos(theta)) T^2`.
fn rotation_exp(t: &DMatrix<f64>, theta: &Expr) -> SymMat {
    let n = t.nrows();
    let t2 = t * t;
    let s = func(Func::Sin, theta.clone());
    let one_minus_c = sub(num(1.0), func(Func::Cos, theta.clone()));
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = num(if i == j { 1.0 } else { 0.0 });
                    add(add(id, mul(num(t[(i, j)]), s.clone())), mul(num(t2[(i, j)]), one_minus_c.clone()))
                })
                .collect()
        })
        .collect()
}

fn cubes_to_minus(t: &DMatrix<f64>) -> bool {
    let t3 = t * t * t;
    (t3 + t).norm() <= 1e-12 * (1.0 + t.norm())
}

fn ad_matrix(spec: &GroupSpec, b: usize) -> DMatrix<f64> {
    let d = spec.dim();
    DMatrix::from_fn(d, d, |k, j| spec.structure_constant(b, j, k))
}

fn act_matrix(cm: &CrossedModule, b: usize) -> DMatrix<f64> {
    let d = cm.h().dim();
    DMatrix::from_fn(d, d, |k, j| cm.act_tensor(b, j, k))
}

fn apply_sym(mat: &SymMat, form: &LieValuedForm) -> LieValuedForm {
    let mut out = LieValuedForm { terms: vec![], ..form.clone() };
    for t in &form.terms {
        for (k, row) in mat.iter().enumerate() {
            let c = &row[t.basis];
            if c.is_zero() {
                continue;
            }
            out.push_term(mul(c.clone(), t.coeff.clone()), k, t.dx.clone()).expect("validated");
        }
    }
    out.normalized()
}

/// `alpha -> Ad(g^-1) alpha + g^-1 dg`, `beta -> g^-1 |> beta`, computed
/// symbolically.
pub fn gauge_transform(
    cm: &CrossedModule,
    alpha: &LieValuedForm,
    beta: &LieValuedForm,
    g: &GaugeMap,
) -> Result<(LieValuedForm, LieValuedForm), FormError> {
    let gs = cm.g();
    let dg = gs.dim();
    let dh = cm.h().dim();
    // inverse factors Ad(exp(-theta_j E_j)) and psi(exp(-theta_j E_j))
    let mut ad_inv = vec![];
    let mut psi_inv = vec![];
    for (b, theta) in &g.factors {
        if *b >= dg {
            return Err(FormError::Basis { index: *b, dim: dg });
        }
        let ad = ad_matrix(gs, *b);
        let t = act_matrix(cm, *b);
        if !cubes_to_minus(&ad) || !cubes_to_minus(&t) {
            return Err(FormError::UnsupportedGauge(*b));
        }
        let minus = neg(theta.clone());
        ad_inv.push(rotation_exp(&ad, &minus));
        psi_inv.push(rotation_exp(&t, &minus));
    }
    // Ad(g^-1) = A_n^-1 ... A_1^-1; suffix[j] = A_n^-1 ... A_{j+1}^-1
    let n = g.factors.len();
    let mut suffix = vec![sym_identity(dg); n + 1];
    for j in (0..n).rev() {
        suffix[j] = sym_matmul(&suffix[j + 1], &ad_inv[j]);
    }
    // psi(g^-1) = P_n^-1 ... P_1^-1
    let mut psi_total = sym_identity(dh);
    for p in psi_inv.iter().rev() {
        psi_total = sym_matmul(&psi_total, p);
    }
    let mut alpha_g = apply_sym(&suffix[0], alpha);
    for (j, (b, theta)) in g.factors.iter().enumerate() {
        // Ad((e_{j+1} ... e_n)^-1) E_b dtheta_j
        let col: Vec<Expr> = suffix[j + 1].iter().map(|row| row[*b].clone()).collect();
        for i in 0..alpha.ambient_dim {
            let dth = theta.diff(alpha.slot(i));
            if dth.is_zero() {
                continue;
            }
            for (k, c) in col.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                alpha_g.push_term(mul(c.clone(), dth.clone()), k, vec![i])?;
            }
        }
    }
    let beta_g = apply_sym(&psi_total, beta);
    Ok((alpha_g.normalized(), beta_g))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GaugeVariation {
    pub step: f64,
    /// Max of `|(H(A_h, B_h) - H(A, B)) / h + Lambda |> H|`.
    pub residual: f64,
    /// Max of `|Lambda |> H|`, the predicted first-order variation.
    pub predicted_norm: f64,
}

/// Finite-difference check of the infinitesimal gauge variation of the
/// 3-curvature, `delta H = -Lambda |> H`, with `g_h = prod_a exp(h lambda_a E_a)`.
pub fn gauge_variation_check(
    cm: &CrossedModule,
    a: &LieValuedForm,
    b: &LieValuedForm,
    lambda: &[Expr],
    h: f64,
    points: &[Vec<f64>],
) -> Result<GaugeVariation, FormError> {
    if lambda.len() != cm.g().dim() {
        return Err(FormError::Dimension(format!("Lambda has {} components, g has dimension {}", lambda.len(), cm.g().dim())));
    }
    let h0 = three_curvature_of(cm, a, b)?;
    let gauge = GaugeMap {
        factors: lambda.iter().enumerate().map(|(i, l)| (i, mul(num(h), l.clone()))).filter(|(_, e)| !e.is_zero()).collect(),
    };
    let (ah, bh) = gauge_transform(cm, a, b, &gauge)?;
    let hh = three_curvature_of(cm, &ah, &bh)?;
    let n = a.ambient_dim;
    let dh = cm.h().dim();
    let mut residual: f64 = 0.0;
    let mut predicted_norm: f64 = 0.0;
    let mut vars = [0.0; N_SLOTS];
    for p in points {
        vars[..n].copy_from_slice(&p[..n]);
        let lam: Vec<f64> = lambda.iter().map(|l| l.eval(&vars)).collect::<Result<_, _>>()?;
        for triple in multi_indices(n, 3) {
            let e: Vec<Vec<f64>> = triple
                .iter()
                .map(|&i| {
                    let mut v = vec![0.0; n];
                    v[i] = 1.0;
                    v
                })
                .collect();
            let tangents: Vec<&[f64]> = e.iter().map(|v| v.as_slice()).collect();
            let base = h0.eval_coords(p, &tangents)?;
            let moved = hh.eval_coords(p, &tangents)?;
            let mut predicted = vec![0.0; dh];
            for (ai, la) in lam.iter().enumerate() {
                for (j, bj) in base.iter().enumerate() {
                    for (k, pk) in predicted.iter_mut().enumerate() {
                        *pk -= la * bj * cm.act_tensor(ai, j, k);
                    }
                }
            }
            let diff: Vec<f64> = (0..dh).map(|k| (moved[k] - base[k]) / h - predicted[k]).collect();
            residual = residual.max(cm.h().coords_norm(&diff));
            predicted_norm = predicted_norm.max(cm.h().coords_norm(&predicted));
        }
    }
    Ok(GaugeVariation { step: h, residual, predicted_norm })
}
