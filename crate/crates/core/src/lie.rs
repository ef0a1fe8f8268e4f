//! Matrix Lie groups and algebras in a fixed faithful representation.
//!
//! Every group is a group of complex square matrices (real groups simply carry
//! zero imaginary parts). A [`GroupSpec`] owns the algebra basis and knows how
//! to exponentiate, take logarithms, measure membership and re-project drifted
//! products back onto the group.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub type Mat = DMatrix<Complex64>;

/// Default membership tolerance for all built-in specs.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-10;

/// Distance from the principal-log branch cut below which `log` refuses.
const BRANCH_MARGIN: f64 = 1e-7;

/// Scaled-norm target for the generic scaling-and-squaring exponential.
const SCALED_NORM: f64 = 1.0 / 32.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("expected a {expected}x{expected} matrix, got {got}x{got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("group spec mismatch: `{left}` vs `{right}`")]
    SpecMismatch { left: String, right: String },
    #[error("logarithm too close to the branch cut (rotation angle {angle:.6})")]
    BranchCut { angle: f64 },
    #[error("logarithm did not converge")]
    LogFailed,
    #[error("projection failed: matrix is {distance:.3e} away from the group")]
    ProjectionFailed { distance: f64 },
    #[error("group membership residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotInGroup { residual: f64, tolerance: f64 },
    #[error("invalid group spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpMethod {
    ClosedForm,
    ScalingAndSquaring,
}

/// Which matrix group the spec describes; selects closed forms and the
/// membership residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Trivial,
    U1,
    Su2,
    So3,
    General,
}

#[derive(Debug, Clone)]
pub struct GroupSpec {
    name: String,
    kind: GroupKind,
    field: Field,
    matrix_size: usize,
    basis: Vec<Mat>,
    exp_method: ExpMethod,
    membership_tolerance: f64,
    gram_inv: DMatrix<f64>,
    // structure[(i * dim + j) * dim + k]: [E_i, E_j] = sum_k c_ijk E_k
    structure: Vec<f64>,
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.matrix_size == other.matrix_size && self.basis == other.basis
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real Frobenius inner product `Re tr(a^H b)`.
pub fn frobenius_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius_norm(a: &Mat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

impl GroupSpec {
    /// Builds a spec and checks that the basis is independent and closed
    /// under the bracket.
    pub fn new(
        name: impl Into<String>,
        kind: GroupKind,
        field: Field,
        matrix_size: usize,
        basis: Vec<Mat>,
        exp_method: ExpMethod,
        membership_tolerance: f64,
    ) -> Result<Self, LieError> {
        let name = name.into();
        if matrix_size == 0 {
            return Err(LieError::InvalidSpec(format!("{name}: matrix size must be positive")));
        }
        for (i, e) in basis.iter().enumerate() {
            if e.nrows() != matrix_size || e.ncols() != matrix_size {
                return Err(LieError::InvalidSpec(format!(
                    "{name}: basis element {i} is {}x{}, expected {matrix_size}x{matrix_size}",
                    e.nrows(),
                    e.ncols()
                )));
            }
        }
        let dim = basis.len();
        let gram = DMatrix::from_fn(dim, dim, |i, j| frobenius_inner(&basis[i], &basis[j]));
        let gram_inv = if dim == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let det = gram.determinant();
            if det.abs() < 1e-12 {
                return Err(LieError::InvalidSpec(format!("{name}: algebra basis is linearly dependent")));
            }
            gram.try_inverse()
                .ok_or_else(|| LieError::InvalidSpec(format!("{name}: singular Gram matrix")))?
        };
        let mut spec = GroupSpec {
            name,
            kind,
            field,
            matrix_size,
            basis,
            exp_method,
            membership_tolerance,
            gram_inv,
            structure: vec![0.0; dim * dim * dim],
        };
        for i in 0..dim {
            for j in 0..dim {
                let br = commutator(&spec.basis[i], &spec.basis[j]);
                let coords = spec.coords(&br);
                let back = spec.from_coords(&coords);
                let off = frobenius_norm(&(&br - &back));
                if off > membership_tolerance.max(1e-12) {
                    return Err(LieError::InvalidSpec(format!(
                        "{}: bracket of basis elements {i},{j} leaves the span (residual {off:.3e})",
                        spec.name
                    )));
                }
                for (k, ck) in coords.iter().enumerate() {
                    spec.structure[(i * dim + j) * dim + k] = *ck;
                }
            }
        }
        Ok(spec)
    }

    /// The trivial group `{1}` as 1x1 identity; its algebra is zero.
    pub fn trivial() -> Self {
        Self::new("trivial", GroupKind::Trivial, Field::Real, 1, vec![], ExpMethod::ClosedForm, MEMBERSHIP_TOLERANCE)
            .expect("trivial spec")
    }

    /// U(1) as 1x1 unit phases, algebra spanned by `i`.
    pub fn u1() -> Self {
        let basis = vec![Mat::from_element(1, 1, c(0.0, 1.0))];
        Self::new("U(1)", GroupKind::U1, Field::Complex, 1, basis, ExpMethod::ClosedForm, MEMBERSHIP_TOLERANCE)
            .expect("u1 spec")
    }

    /// SU(2) in the defining representation with basis `E_a = -i sigma_a / 2`,
    /// so that `[E_a, E_b] = eps_abc E_c`.
    pub fn su2() -> Self {
        let basis = su2_basis();
        Self::new("SU(2)", GroupKind::Su2, Field::Complex, 2, basis, ExpMethod::ClosedForm, MEMBERSHIP_TOLERANCE)
            .expect("su2 spec")
    }

    /// SO(3) with basis `(L_a)_bc = -eps_abc`, so that `[L_a, L_b] = eps_abc L_c`.
    pub fn so3() -> Self {
        let basis = so3_basis();
        Self::new("SO(3)", GroupKind::So3, Field::Real, 3, basis, ExpMethod::ClosedForm, MEMBERSHIP_TOLERANCE)
            .expect("so3 spec")
    }

    pub fn with_membership_tolerance(mut self, tol: f64) -> Self {
        self.membership_tolerance = tol;
        self
    }

    pub fn with_exp_method(mut self, method: ExpMethod) -> Self {
        self.exp_method = method;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn matrix_size(&self) -> usize {
        self.matrix_size
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Mat] {
        &self.basis
    }

    pub fn exp_method(&self) -> ExpMethod {
        self.exp_method
    }

    pub fn membership_tolerance(&self) -> f64 {
        self.membership_tolerance
    }

    /// Structure constant `c_ijk` with `[E_i, E_j] = sum_k c_ijk E_k`.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim();
        self.structure[(i * d + j) * d + k]
    }

    pub fn identity(&self) -> Mat {
        Mat::identity(self.matrix_size, self.matrix_size)
    }

    pub fn zero_algebra(&self) -> Mat {
        Mat::zeros(self.matrix_size, self.matrix_size)
    }

    /// Coordinates of `x` against the basis (Frobenius-orthogonal projection
    /// onto the span when `x` is not exactly in it).
    pub fn coords(&self, x: &Mat) -> Vec<f64> {
        let d = self.dim();
        if d == 0 {
            return vec![];
        }
        let rhs = nalgebra::DVector::from_fn(d, |i, _| frobenius_inner(&self.basis[i], x));
        let sol = &self.gram_inv * rhs;
        sol.iter().copied().collect()
    }

    pub fn from_coords(&self, coords: &[f64]) -> Mat {
        let mut m = self.zero_algebra();
        for (e, &x) in self.basis.iter().zip(coords) {
            if x != 0.0 {
                m += e * c(x, 0.0);
            }
        }
        m
    }

    /// Frobenius norm of the algebra element with the given coordinates.
    pub fn coords_norm(&self, coords: &[f64]) -> f64 {
        frobenius_norm(&self.from_coords(coords))
    }

    /// Bracket in coordinates, via structure constants.
    pub fn bracket_coords(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for i in 0..d {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                if b[j] == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += a[i] * b[j] * self.structure_constant(i, j, k);
                }
            }
        }
        out
    }

    /// Residual measuring how far `g` is from the group.
    pub fn membership_residual(&self, g: &Mat) -> f64 {
        let n = self.matrix_size;
        if g.nrows() != n || g.ncols() != n {
            return f64::INFINITY;
        }
        let id = self.identity();
        match self.kind {
            GroupKind::Trivial => frobenius_norm(&(g - &id)),
            GroupKind::U1 => frobenius_norm(&(g.adjoint() * g - &id)),
            GroupKind::Su2 => frobenius_norm(&(g.adjoint() * g - &id)) + (g.determinant() - c(1.0, 0.0)).norm(),
            GroupKind::So3 => {
                let imag: f64 = g.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                frobenius_norm(&(g.transpose() * g - &id)) + (g.determinant() - c(1.0, 0.0)).norm() + imag
            }
            GroupKind::General => {
                if g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && g.determinant().norm() > 1e-300 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn check_square(&self, x: &Mat) -> Result<(), LieError> {
        if x.nrows() != x.ncols() {
            return Err(LieError::NonSquare { rows: x.nrows(), cols: x.ncols() });
        }
        if x.nrows() != self.matrix_size {
            return Err(LieError::SizeMismatch { expected: self.matrix_size, got: x.nrows() });
        }
        if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(LieError::NonFinite);
        }
        Ok(())
    }

    /// Matrix exponential of an algebra matrix.
    pub fn exp_mat(&self, x: &Mat) -> Result<Mat, LieError> {
        self.check_square(x)?;
        let g = match (self.exp_method, self.kind) {
            (ExpMethod::ClosedForm, GroupKind::Trivial) => self.identity(),
            (ExpMethod::ClosedForm, GroupKind::U1) => Mat::from_element(1, 1, x[(0, 0)].exp()),
            (ExpMethod::ClosedForm, GroupKind::Su2) => exp_2x2(x),
            (ExpMethod::ClosedForm, GroupKind::So3) => match so3_vector(x) {
                Some(w) => rodrigues(w),
                None => expm_scaling_squaring(x),
            },
            _ => expm_scaling_squaring(x),
        };
        if self.kind != GroupKind::General && self.membership_residual(&g) > 1e-13 {
            return self.project(&g);
        }
        Ok(g)
    }

    /// Principal logarithm.
    pub fn log_mat(&self, g: &Mat) -> Result<Mat, LieError> {
        self.check_square(g)?;
        match self.kind {
            GroupKind::Trivial => Ok(self.zero_algebra()),
            GroupKind::U1 => {
                let z = g[(0, 0)];
                let theta = z.arg();
                if PI - theta.abs() < BRANCH_MARGIN {
                    return Err(LieError::BranchCut { angle: theta });
                }
                Ok(Mat::from_element(1, 1, c(z.norm().ln(), theta)))
            }
            GroupKind::Su2 => log_su2(g),
            GroupKind::So3 => log_so3(g),
            GroupKind::General => logm_inverse_scaling(g),
        }
    }

    /// Nearest group element (polar projection, then determinant
    /// normalisation for special groups).
    pub fn project(&self, m: &Mat) -> Result<Mat, LieError> {
        self.check_square(m)?;
        let projected = match self.kind {
            GroupKind::Trivial => self.identity(),
            GroupKind::General => m.clone(),
            GroupKind::U1 => {
                let z = m[(0, 0)];
                if z.norm() < 1e-300 {
                    return Err(LieError::ProjectionFailed { distance: 1.0 });
                }
                Mat::from_element(1, 1, z / z.norm())
            }
            GroupKind::Su2 => {
                let u = polar_unitary(m)?;
                let det = u.determinant();
                // det(u) is a unit phase; divide by its principal square root
                let root = Complex64::from_polar(1.0, det.arg() / 2.0);
                u / root
            }
            GroupKind::So3 => {
                let real = m.map(|z| z.re);
                let svd = real.clone().svd(true, true);
                let (u, vt) = match (svd.u, svd.v_t) {
                    (Some(u), Some(vt)) => (u, vt),
                    _ => return Err(LieError::ProjectionFailed { distance: f64::INFINITY }),
                };
                let r = u * vt;
                if r.determinant() < 0.0 {
                    return Err(LieError::ProjectionFailed { distance: frobenius_norm(m) });
                }
                r.map(|x| c(x, 0.0))
            }
        };
        let distance = frobenius_norm(&(m - &projected));
        if distance > 0.1 {
            return Err(LieError::ProjectionFailed { distance });
        }
        Ok(projected)
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

fn polar_unitary(m: &Mat) -> Result<Mat, LieError> {
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => Ok(u * vt),
        _ => Err(LieError::ProjectionFailed { distance: f64::INFINITY }),
    }
}

fn su2_basis() -> Vec<Mat> {
    let z = c(0.0, 0.0);
    let h = 0.5;
    vec![
        // -i sigma_x / 2
        Mat::from_row_slice(2, 2, &[z, c(0.0, -h), c(0.0, -h), z]),
        // -i sigma_y / 2
        Mat::from_row_slice(2, 2, &[z, c(-h, 0.0), c(h, 0.0), z]),
        // -i sigma_z / 2
        Mat::from_row_slice(2, 2, &[c(0.0, -h), z, z, c(0.0, h)]),
    ]
}

fn so3_basis() -> Vec<Mat> {
    (0..3)
        .map(|a| {
            Mat::from_fn(3, 3, |b, cc| c(-levi_civita(a, b, cc), 0.0))
        })
        .collect()
}

pub fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `exp` of a 2x2 matrix via `X^2 = q I` on its traceless part.
fn exp_2x2(x: &Mat) -> Mat {
    let half_tr = (x[(0, 0)] + x[(1, 1)]) * 0.5;
    let mut t = x.clone();
    t[(0, 0)] -= half_tr;
    t[(1, 1)] -= half_tr;
    let q = t[(0, 0)] * t[(0, 0)] + t[(0, 1)] * t[(1, 0)];
    let (ch, sh) = if q.norm() < 1e-8 {
        (
            c(1.0, 0.0) + q / 2.0 + q * q / 24.0 + q * q * q / 720.0,
            c(1.0, 0.0) + q / 6.0 + q * q / 120.0 + q * q * q / 5040.0,
        )
    } else {
        let r = q.sqrt();
        (r.cosh(), r.sinh() / r)
    };
    let scale = half_tr.exp();
    let mut out = t * sh;
    out[(0, 0)] += ch;
    out[(1, 1)] += ch;
    out * scale
}

/// Rotation vector of a real antisymmetric 3x3 matrix, if `x` is one.
fn so3_vector(x: &Mat) -> Option<[f64; 3]> {
    let scale = frobenius_norm(x).max(1.0);
    let sym: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (x[(i, j)] + x[(j, i)]).norm() + x[(i, j)].im.abs())
        .sum();
    if sym > 1e-12 * scale {
        return None;
    }
    Some([x[(2, 1)].re, x[(0, 2)].re, x[(1, 0)].re])
}

fn hat(w: [f64; 3]) -> Mat {
    Mat::from_row_slice(
        3,
        3,
        &[
            c(0.0, 0.0),
            c(-w[2], 0.0),
            c(w[1], 0.0),
            c(w[2], 0.0),
            c(0.0, 0.0),
            c(-w[0], 0.0),
            c(-w[1], 0.0),
            c(w[0], 0.0),
            c(0.0, 0.0),
        ],
    )
}

fn rodrigues(w: [f64; 3]) -> Mat {
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(w);
    let k2 = &k * &k;
    Mat::identity(3, 3) + k * c(a, 0.0) + k2 * c(b, 0.0)
}

fn log_su2(g: &Mat) -> Result<Mat, LieError> {
    let cos_t = ((g[(0, 0)] + g[(1, 1)]) * 0.5).re;
    let mut t = g.clone();
    t[(0, 0)] -= c(cos_t, 0.0);
    t[(1, 1)] -= c(cos_t, 0.0);
    let sin_t = frobenius_norm(&t) / std::f64::consts::SQRT_2;
    let theta = sin_t.atan2(cos_t);
    if PI - theta < BRANCH_MARGIN {
        return Err(LieError::BranchCut { angle: theta });
    }
    let factor = if sin_t < 1e-8 { 1.0 + theta * theta / 6.0 } else { theta / sin_t };
    let mut x = t * c(factor, 0.0);
    // keep the result exactly traceless
    let half_tr = (x[(0, 0)] + x[(1, 1)]) * 0.5;
    x[(0, 0)] -= half_tr;
    x[(1, 1)] -= half_tr;
    Ok(x)
}

fn log_so3(r: &Mat) -> Result<Mat, LieError> {
    let tr = (r[(0, 0)] + r[(1, 1)] + r[(2, 2)]).re;
    let cos_t = (tr - 1.0) / 2.0;
    let skew = (r - r.transpose()) * c(0.5, 0.0);
    let w = [skew[(2, 1)].re, skew[(0, 2)].re, skew[(1, 0)].re];
    let sin_t = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let theta = sin_t.atan2(cos_t);
    if PI - theta < BRANCH_MARGIN {
        return Err(LieError::BranchCut { angle: theta });
    }
    let factor = if sin_t < 1e-8 { 1.0 + theta * theta / 6.0 } else { theta / sin_t };
    Ok(hat([w[0] * factor, w[1] * factor, w[2] * factor]))
}

/// Scaling-and-squaring with a Taylor polynomial at the scaled argument.
pub fn expm_scaling_squaring(x: &Mat) -> Mat {
    let n = x.nrows();
    let norm = frobenius_norm(x);
    let mut squarings = 0u32;
    if norm > SCALED_NORM {
        squarings = (norm / SCALED_NORM).log2().ceil() as u32;
    }
    let scaled = x * c(0.5f64.powi(squarings as i32), 0.0);
    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=14 {
        term = &term * &scaled * c(1.0 / k as f64, 0.0);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn logm_inverse_scaling(g: &Mat) -> Result<Mat, LieError> {
    let n = g.nrows();
    let id = Mat::identity(n, n);
    let mut a = g.clone();
    let mut roots = 0;
    while frobenius_norm(&(&a - &id)) > 0.25 {
        if roots >= 40 {
            return Err(LieError::BranchCut { angle: PI });
        }
        a = sqrtm_denman_beavers(&a)?;
        roots += 1;
    }
    let e = &a - &id;
    let mut power = e.clone();
    let mut sum = e.clone();
    for k in 2..400 {
        power = &power * &e;
        let term = &power * c(if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64, 0.0);
        let small = frobenius_norm(&term) < 1e-18;
        sum += term;
        if small {
            return Ok(sum * c(2f64.powi(roots), 0.0));
        }
    }
    Err(LieError::LogFailed)
}

fn sqrtm_denman_beavers(a: &Mat) -> Result<Mat, LieError> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Mat::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().ok_or(LieError::BranchCut { angle: PI })?;
        let z_inv = z.clone().try_inverse().ok_or(LieError::BranchCut { angle: PI })?;
        let y_next = (&y + z_inv) * c(0.5, 0.0);
        let z_next = (&z + y_inv) * c(0.5, 0.0);
        let delta = frobenius_norm(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta < 1e-15 * frobenius_norm(&y).max(1.0) {
            return Ok(y);
        }
    }
    Err(LieError::LogFailed)
}

/// A group element tied to its spec.
#[derive(Debug, Clone)]
pub struct GroupElement {
    spec: Arc<GroupSpec>,
    matrix: Mat,
}

/// An algebra element tied to its spec, optionally carrying coordinates.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    spec: Arc<GroupSpec>,
    matrix: Mat,
    coordinates: Option<Vec<f64>>,
}

impl GroupElement {
    /// Checks membership within the spec's tolerance.
    pub fn new(spec: Arc<GroupSpec>, matrix: Mat) -> Result<Self, LieError> {
        spec.check_square(&matrix)?;
        let residual = spec.membership_residual(&matrix);
        if residual > spec.membership_tolerance {
            return Err(LieError::NotInGroup { residual, tolerance: spec.membership_tolerance });
        }
        Ok(GroupElement { spec, matrix })
    }

    pub(crate) fn new_unchecked(spec: Arc<GroupSpec>, matrix: Mat) -> Self {
        GroupElement { spec, matrix }
    }

    pub fn identity(spec: Arc<GroupSpec>) -> Self {
        let matrix = spec.identity();
        GroupElement { spec, matrix }
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn membership_residual(&self) -> f64 {
        self.spec.membership_residual(&self.matrix)
    }

    pub fn inverse(&self) -> GroupElement {
        let inv = match self.spec.kind {
            GroupKind::General => self.matrix.clone().try_inverse().unwrap_or_else(|| self.matrix.clone()),
            GroupKind::So3 => self.matrix.transpose(),
            _ => self.matrix.adjoint(),
        };
        GroupElement { spec: self.spec.clone(), matrix: inv }
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement, LieError> {
        same_spec(&self.spec, &other.spec)?;
        Ok(GroupElement { spec: self.spec.clone(), matrix: &self.matrix * &other.matrix })
    }
}

impl AlgebraElement {
    pub fn new(spec: Arc<GroupSpec>, matrix: Mat) -> Result<Self, LieError> {
        spec.check_square(&matrix)?;
        Ok(AlgebraElement { spec, matrix, coordinates: None })
    }

    pub fn from_coords(spec: Arc<GroupSpec>, coords: &[f64]) -> Self {
        let matrix = spec.from_coords(coords);
        AlgebraElement { spec, matrix, coordinates: Some(coords.to_vec()) }
    }

    pub fn zero(spec: Arc<GroupSpec>) -> Self {
        let matrix = spec.zero_algebra();
        let d = spec.dim();
        AlgebraElement { spec, matrix, coordinates: Some(vec![0.0; d]) }
    }

    pub fn spec(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    /// Coordinates against the basis (computed if not stored).
    pub fn coordinates(&self) -> Vec<f64> {
        match &self.coordinates {
            Some(c) => c.clone(),
            None => self.spec.coords(&self.matrix),
        }
    }

    pub fn norm(&self) -> f64 {
        frobenius_norm(&self.matrix)
    }

    pub fn scale(&self, s: f64) -> AlgebraElement {
        AlgebraElement {
            spec: self.spec.clone(),
            matrix: &self.matrix * c(s, 0.0),
            coordinates: self.coordinates.as_ref().map(|v| v.iter().map(|x| x * s).collect()),
        }
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement, LieError> {
        same_spec(&self.spec, &other.spec)?;
        Ok(AlgebraElement {
            spec: self.spec.clone(),
            matrix: &self.matrix + &other.matrix,
            coordinates: None,
        })
    }
}

fn same_spec(a: &Arc<GroupSpec>, b: &Arc<GroupSpec>) -> Result<(), LieError> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(LieError::SpecMismatch { left: a.name.clone(), right: b.name.clone() })
    }
}

pub fn exp_alg(x: &AlgebraElement) -> Result<GroupElement, LieError> {
    let g = x.spec.exp_mat(&x.matrix)?;
    Ok(GroupElement { spec: x.spec.clone(), matrix: g })
}

pub fn log_grp(g: &GroupElement) -> Result<AlgebraElement, LieError> {
    let x = g.spec.log_mat(&g.matrix)?;
    Ok(AlgebraElement { spec: g.spec.clone(), matrix: x, coordinates: None })
}

pub fn bracket(x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement, LieError> {
    same_spec(&x.spec, &y.spec)?;
    Ok(AlgebraElement { spec: x.spec.clone(), matrix: commutator(&x.matrix, &y.matrix), coordinates: None })
}

pub fn group_dist(g: &GroupElement, h: &GroupElement) -> Result<f64, LieError> {
    same_spec(&g.spec, &h.spec)?;
    Ok(frobenius_norm(&(&g.matrix - &h.matrix)))
}

pub fn project_to_group(m: &Mat, spec: &Arc<GroupSpec>) -> Result<GroupElement, LieError> {
    let g = spec.project(m)?;
    Ok(GroupElement { spec: spec.clone(), matrix: g })
}

/// Frobenius distance between raw matrices.
pub fn mat_dist(a: &Mat, b: &Mat) -> f64 {
    frobenius_norm(&(a - b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coords(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for spec in [GroupSpec::u1(), GroupSpec::su2(), GroupSpec::so3(), GroupSpec::trivial()] {
            let g = spec.exp_mat(&spec.zero_algebra()).unwrap();
            assert_eq!(g, spec.identity());
        }
    }

    #[test]
    fn su2_diagonal_closed_form() {
        let spec = GroupSpec::su2();
        let x = Mat::from_row_slice(2, 2, &[c(0.0, PI / 2.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -PI / 2.0)]);
        let g = spec.exp_mat(&x).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)]);
        assert!(mat_dist(&g, &expected) < 1e-15);
    }

    #[test]
    fn exp_inverse_product_is_identity() {
        let spec = Arc::new(GroupSpec::su2());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = AlgebraElement::from_coords(spec.clone(), &random_coords(&mut rng, 3, 2.0));
            let g = exp_alg(&x).unwrap();
            let gi = exp_alg(&x.scale(-1.0)).unwrap();
            let prod = g.compose(&gi).unwrap();
            assert!(mat_dist(prod.matrix(), &spec.identity()) < 1e-12);
        }
    }

    #[test]
    fn log_identity_is_zero_and_diagonal_case() {
        let spec = GroupSpec::su2();
        assert!(frobenius_norm(&spec.log_mat(&spec.identity()).unwrap()) == 0.0);
        let th: f64 = 0.3;
        let g = Mat::from_row_slice(2, 2, &[Complex64::from_polar(1.0, th), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, -th)]);
        let x = spec.log_mat(&g).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[c(0.0, th), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -th)]);
        assert!(mat_dist(&x, &expected) < 1e-14);
    }

    #[test]
    fn log_exp_round_trip_on_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in [GroupSpec::su2(), GroupSpec::so3(), GroupSpec::u1()] {
            for _ in 0..100 {
                let mut co = random_coords(&mut rng, spec.dim(), 1.0);
                let x = spec.from_coords(&co);
                let n = frobenius_norm(&x);
                if n > 1.0 {
                    co.iter_mut().for_each(|v| *v /= n);
                }
                let x = spec.from_coords(&co);
                let back = spec.log_mat(&spec.exp_mat(&x).unwrap()).unwrap();
                assert!(mat_dist(&back, &x) < 1e-10, "{}: {}", spec.name(), mat_dist(&back, &x));
            }
        }
    }

    #[test]
    fn generic_exp_and_log_match_closed_forms() {
        let closed = GroupSpec::su2();
        let generic = GroupSpec::new(
            "GL(2)",
            GroupKind::General,
            Field::Complex,
            2,
            closed.basis().to_vec(),
            ExpMethod::ScalingAndSquaring,
            MEMBERSHIP_TOLERANCE,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = closed.from_coords(&random_coords(&mut rng, 3, 1.0));
            let a = closed.exp_mat(&x).unwrap();
            let b = generic.exp_mat(&x).unwrap();
            assert!(mat_dist(&a, &b) < 1e-13);
            let l = generic.log_mat(&b).unwrap();
            assert!(mat_dist(&l, &x) < 1e-10);
        }
    }

    #[test]
    fn u1_branch_cut_is_an_error() {
        let spec = GroupSpec::u1();
        let g = Mat::from_element(1, 1, c(-1.0, 0.0));
        assert!(matches!(spec.log_mat(&g), Err(LieError::BranchCut { .. })));
        let spec = GroupSpec::su2();
        let minus = spec.identity() * c(-1.0, 0.0);
        assert!(matches!(spec.log_mat(&minus), Err(LieError::BranchCut { .. })));
    }

    #[test]
    fn bracket_structure_constants() {
        let spec = Arc::new(GroupSpec::su2());
        let e: Vec<_> = (0..3).map(|i| AlgebraElement::new(spec.clone(), spec.basis()[i].clone()).unwrap()).collect();
        let b = bracket(&e[0], &e[1]).unwrap();
        assert!(mat_dist(b.matrix(), e[2].matrix()) < 1e-15);
        assert!(bracket(&e[0], &e[0]).unwrap().norm() == 0.0);
        assert_eq!(spec.structure_constant(0, 1, 2), 1.0);
        assert_eq!(spec.structure_constant(1, 0, 2), -1.0);
        let so3 = GroupSpec::so3();
        assert!((so3.structure_constant(1, 2, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distances() {
        let spec = Arc::new(GroupSpec::u1());
        let one = GroupElement::identity(spec.clone());
        let minus = GroupElement::new(spec.clone(), Mat::from_element(1, 1, c(-1.0, 0.0))).unwrap();
        assert!((group_dist(&one, &minus).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(group_dist(&one, &one).unwrap(), 0.0);
        let other = Arc::new(GroupSpec::su2());
        assert!(group_dist(&one, &GroupElement::identity(other)).is_err());
    }

    #[test]
    fn projection_cases() {
        let spec = Arc::new(GroupSpec::su2());
        let g = spec.exp_mat(&spec.from_coords(&[0.3, -0.2, 0.9])).unwrap();
        let p = project_to_group(&g, &spec).unwrap();
        assert!(mat_dist(p.matrix(), &g) < 1e-14);
        let m = spec.identity() * c(1.0 + 1e-6, 0.0);
        let p = project_to_group(&m, &spec).unwrap();
        assert!(mat_dist(p.matrix(), &spec.identity()) < 1e-5);
        let far = spec.identity() * c(3.0, 0.0);
        assert!(matches!(project_to_group(&far, &spec), Err(LieError::ProjectionFailed { .. })));
    }

    #[test]
    fn drift_accumulation_is_bounded_by_reprojection() {
        let spec = GroupSpec::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc = spec.identity();
        for i in 0..4usize.pow(6) {
            let f = spec.exp_mat(&spec.from_coords(&random_coords(&mut rng, 3, 1e-3))).unwrap();
            acc = &acc * f;
            if (i + 1) % 64 == 0 {
                acc = spec.project(&acc).unwrap();
            }
        }
        acc = spec.project(&acc).unwrap();
        assert!(spec.membership_residual(&acc) <= 1e-10);
    }

    #[test]
    fn commuting_exponentials_add() {
        let spec = GroupSpec::su2();
        let x = spec.from_coords(&[0.0, 0.0, 0.7]);
        let y = spec.from_coords(&[0.0, 0.0, -1.9]);
        let lhs = spec.exp_mat(&(&x + &y)).unwrap();
        let rhs = spec.exp_mat(&x).unwrap() * spec.exp_mat(&y).unwrap();
        assert!(mat_dist(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn truncated_bch_constant_is_bounded() {
        let spec = GroupSpec::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = spec.from_coords(&random_coords(&mut rng, 3, 0.05));
            let y = spec.from_coords(&random_coords(&mut rng, 3, 0.05));
            let lhs = spec.exp_mat(&x).unwrap() * spec.exp_mat(&y).unwrap();
            let z = &x + &y + commutator(&x, &y) * c(0.5, 0.0);
            let rhs = spec.exp_mat(&z).unwrap();
            let s = frobenius_norm(&x) + frobenius_norm(&y);
            worst = worst.max(mat_dist(&lhs, &rhs) / s.powi(3));
        }
        assert!(worst < 1.0, "BCH constant {worst}");
    }

    #[test]
    fn invalid_basis_is_rejected() {
        let e = su2_basis();
        let dependent = vec![e[0].clone(), e[0].clone() * c(2.0, 0.0)];
        assert!(GroupSpec::new("bad", GroupKind::General, Field::Complex, 2, dependent, ExpMethod::ScalingAndSquaring, 1e-10).is_err());
        let open = vec![e[0].clone(), e[1].clone()];
        assert!(GroupSpec::new("bad", GroupKind::General, Field::Complex, 2, open, ExpMethod::ScalingAndSquaring, 1e-10).is_err());
    }

    #[test]
    fn non_square_and_non_finite_inputs() {
        let spec = GroupSpec::su2();
        let bad = Mat::zeros(2, 3);
        assert!(matches!(spec.exp_mat(&bad), Err(LieError::NonSquare { .. })));
        let mut nan = spec.zero_algebra();
        nan[(0, 0)] = c(f64::NAN, 0.0);
        assert!(matches!(spec.exp_mat(&nan), Err(LieError::NonFinite)));
    }
}
