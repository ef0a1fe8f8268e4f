//! Multiplicative integration: Riemann products over subdivided paths and
//! kites, their limits with convergence diagnostics, tetrahedron boundary
//! products and 3-form volume integrals.
//!
//! Products are ordered with the first factor leftmost. Factor computation
//! runs on the rayon pool; the reduction always follows the declared order.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chains::{self, split_face, subdivide_path, ChainError, Chain3, Kite, Simplex, Surface, SurfacePair, KITE_PRODUCT_ORDER};
use crate::forms::{FormError, LieValuedForm, TwoConnection};
use crate::lie::{group_dist, AlgebraElement, GroupElement, GroupSpec, LieError, Mat};
use crate::quadrature::{gauss_legendre_3, TET_4, TRIANGLE_3};

#[derive(Debug, Error)]
pub enum MiError {
    #[error("non-finite integrand")]
    NonFinite,
    #[error("expected a {expected}-form, got degree {got}")]
    Degree { expected: usize, got: usize },
    #[error("expected a {expected}-simplex, got dimension {got}")]
    SimplexDim { expected: usize, got: usize },
    #[error("surface is not closed ({0} boundary edges remain)")]
    NotClosed(usize),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_PATH_LEVELS: u32 = 7;
pub const DEFAULT_SURFACE_LEVELS: u32 = 6;
const REPROJECT_EVERY: usize = 64;
const REPROJECT_THRESHOLD: f64 = 1e-13;

/// How ordered products are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Left-to-right; bit-reproducible.
    #[default]
    Sequential,
    /// Order-preserving chunked tree reduction on the rayon pool.
    Tree,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Engine {
    pub reduction: Reduction,
}

impl Engine {
    pub fn deterministic() -> Self {
        Engine { reduction: Reduction::Sequential }
    }

    pub fn parallel() -> Self {
        Engine { reduction: Reduction::Tree }
    }

    /// Ordered product of `factors`, re-projected onto the group every
    /// 64 factors when drift is visible.
    pub fn ordered_product(&self, spec: &GroupSpec, factors: &[Mat]) -> Result<Mat, LieError> {
        match self.reduction {
            Reduction::Sequential => sequential_product(spec, factors),
            Reduction::Tree => {
                let chunks: Vec<Mat> = factors
                    .par_chunks(REPROJECT_EVERY)
                    .map(|c| sequential_product(spec, c))
                    .collect::<Result<_, _>>()?;
                if chunks.len() <= 1 {
                    return Ok(chunks.into_iter().next().unwrap_or_else(|| spec.identity()));
                }
                Engine::parallel().ordered_product(spec, &chunks)
            }
        }
    }
}

fn sequential_product(spec: &GroupSpec, factors: &[Mat]) -> Result<Mat, LieError> {
    let mut acc = spec.identity();
    for (i, f) in factors.iter().enumerate() {
        acc *= f;
        if (i + 1) % REPROJECT_EVERY == 0 && spec.membership_residual(&acc) > REPROJECT_THRESHOLD {
            acc = spec.project(&acc)?;
        }
    }
    if spec.membership_residual(&acc) > REPROJECT_THRESHOLD {
        acc = spec.project(&acc)?;
    }
    Ok(acc)
}

fn finite(c: &[f64]) -> Result<(), MiError> {
    if c.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MiError::NonFinite)
    }
}

/// `int_sigma alpha` by 3-point Gauss-Legendre, in algebra coordinates.
pub fn integrate_1form(alpha: &LieValuedForm, sigma: &Simplex) -> Result<Vec<f64>, MiError> {
    let mut out = vec![0.0; alpha.spec().dim()];
    for (s, w) in gauss_legendre_3() {
        let (x, t) = sigma.point_and_tangents(&[s]);
        let mut v = vec![0.0; out.len()];
        alpha.eval_coords_fast(&x, &[&t[0]], &mut v);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
    let sign = sigma.orientation() as f64;
    out.iter_mut().for_each(|o| *o *= sign);
    finite(&out)?;
    Ok(out)
}

/// `int_tau beta` by the degree-2 triangle rule, in algebra coordinates.
pub fn integrate_2form(beta: &LieValuedForm, tau: &Simplex) -> Result<Vec<f64>, MiError> {
    let mut out = vec![0.0; beta.spec().dim()];
    for (p, w) in TRIANGLE_3.iter() {
        let (x, t) = tau.point_and_tangents(p);
        let mut v = vec![0.0; out.len()];
        beta.eval_coords_fast(&x, &[&t[0], &t[1]], &mut v);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
    let sign = tau.orientation() as f64;
    out.iter_mut().for_each(|o| *o *= sign);
    finite(&out)?;
    Ok(out)
}

fn integrate_3form_simplex(h: &LieValuedForm, f: &Simplex) -> Result<Vec<f64>, MiError> {
    let mut out = vec![0.0; h.spec().dim()];
    for (p, w) in TET_4.iter() {
        let (x, t) = f.point_and_tangents(p);
        let mut v = vec![0.0; out.len()];
        h.eval_coords_fast(&x, &[&t[0], &t[1], &t[2]], &mut v);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
    let sign = f.orientation() as f64;
    out.iter_mut().for_each(|o| *o *= sign);
    finite(&out)?;
    Ok(out)
}

fn check_form(w: &LieValuedForm, degree: usize, s: &Simplex) -> Result<(), MiError> {
    if w.degree() != degree {
        return Err(MiError::Degree { expected: degree, got: w.degree() });
    }
    if s.ambient_dim() != w.ambient_dim() {
        return Err(FormError::Dimension(format!(
            "simplex maps into dimension {}, form lives in dimension {}",
            s.ambient_dim(),
            w.ambient_dim()
        ))
        .into());
    }
    Ok(())
}

/// Convergence record of a sequence of Riemann products.
#[derive(Debug, Clone)]
pub struct MIResult {
    pub value: GroupElement,
    pub per_level: Vec<(u32, GroupElement)>,
    pub diffs: Vec<f64>,
    pub observed_order: Option<f64>,
    pub converged: bool,
}

/// Median of `log2(d_i / d_{i+1})` over consecutive nonzero diffs.
pub fn observed_order(diffs: &[f64]) -> Option<f64> {
    let mut rates: Vec<f64> = diffs
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    if rates.is_empty() {
        return None;
    }
    rates.sort_by(|a, b| a.total_cmp(b));
    let n = rates.len();
    Some(if n % 2 == 1 { rates[n / 2] } else { 0.5 * (rates[n / 2 - 1] + rates[n / 2]) })
}

impl MIResult {
    fn from_levels(per_level: Vec<(u32, GroupElement)>, tol: f64) -> Result<Self, MiError> {
        let diffs = per_level.windows(2).map(|w| group_dist(&w[0].1, &w[1].1)).collect::<Result<Vec<_>, _>>()?;
        let converged = diffs.last().is_some_and(|d| *d <= tol);
        Ok(MIResult {
            value: per_level.last().expect("at least one level").1.clone(),
            observed_order: observed_order(&diffs),
            per_level,
            diffs,
            converged,
        })
    }

    /// Serializable summary: per-level log coordinates (or matrix entries
    /// when no principal log exists) and diagnostics.
    pub fn summary(&self) -> MISummary {
        MISummary {
            value: element_coords(&self.value),
            levels: self.per_level.iter().map(|(k, _)| *k).collect(),
            level_values: self.per_level.iter().map(|(_, g)| element_coords(g)).collect(),
            diffs: self.diffs.clone(),
            observed_order: self.observed_order,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MISummary {
    pub value: Vec<f64>,
    pub levels: Vec<u32>,
    pub level_values: Vec<Vec<f64>>,
    pub diffs: Vec<f64>,
    pub observed_order: Option<f64>,
    pub converged: bool,
}

/// Algebra coordinates of the principal log, falling back to the real and
/// imaginary parts of the matrix entries.
pub fn element_coords(g: &GroupElement) -> Vec<f64> {
    match g.spec().log_mat(g.matrix()) {
        Ok(x) => g.spec().coords(&x),
        Err(_) => g.matrix().iter().flat_map(|z| [z.re, z.im]).collect(),
    }
}

fn wrap(spec: &Arc<GroupSpec>, m: Mat) -> GroupElement {
    GroupElement::new_unchecked(spec.clone(), m)
}

impl Engine {
    fn path_factors(&self, alpha: &LieValuedForm, pieces: &[Simplex]) -> Result<Vec<Mat>, MiError> {
        let spec = alpha.spec();
        pieces
            .par_iter()
            .map(|p| {
                let c = integrate_1form(alpha, p)?;
                Ok(spec.exp_mat(&spec.from_coords(&c))?)
            })
            .collect()
    }

    fn rp_path_mat(&self, alpha: &LieValuedForm, sigma: &Simplex, k: u32) -> Result<Mat, MiError> {
        let sigma = sigma.normalized();
        let factors = self.path_factors(alpha, &subdivide_path(&sigma, k))?;
        Ok(self.ordered_product(alpha.spec(), &factors)?)
    }

    /// `prod_i exp(int_{sigma_i} alpha)` over `2^k` equal pieces, in order.
    pub fn rp_path(&self, alpha: &LieValuedForm, sigma: &Simplex, k: u32) -> Result<GroupElement, MiError> {
        if sigma.dim() != 1 {
            return Err(MiError::SimplexDim { expected: 1, got: sigma.dim() });
        }
        check_form(alpha, 1, sigma)?;
        Ok(wrap(alpha.spec(), self.rp_path_mat(alpha, sigma, k)?))
    }

    /// Riemann product along a multi-piece path, each piece at level `k`.
    pub fn rp_path_chain(&self, alpha: &LieValuedForm, path: &[Simplex], k: u32) -> Result<GroupElement, MiError> {
        let spec = alpha.spec();
        let mut acc = spec.identity();
        for s in path {
            acc *= self.rp_path(alpha, s, k)?.into_matrix();
        }
        Ok(wrap(spec, acc))
    }

    pub fn mi_path(&self, alpha: &LieValuedForm, sigma: &Simplex, tol: f64, k_max: u32) -> Result<MIResult, MiError> {
        self.converge(tol, k_max, |k| self.rp_path(alpha, sigma, k))
    }

    pub fn mi_path_chain(&self, alpha: &LieValuedForm, path: &[Simplex], tol: f64, k_max: u32) -> Result<MIResult, MiError> {
        self.converge(tol, k_max, |k| self.rp_path_chain(alpha, path, k))
    }

    fn converge<F>(&self, tol: f64, k_max: u32, mut level: F) -> Result<MIResult, MiError>
    where
        F: FnMut(u32) -> Result<GroupElement, MiError>,
    {
        if tol.is_nan() || tol <= 0.0 {
            return Err(MiError::Tolerance(tol));
        }
        let mut per_level = vec![(0, level(0)?)];
        for k in 1..=k_max {
            let g = level(k)?;
            let d = group_dist(&per_level.last().expect("nonempty").1, &g)?;
            per_level.push((k, g));
            if d <= tol {
                break;
            }
        }
        MIResult::from_levels(per_level, tol)
    }

    /// Leaves of the kite subdivision tree in product order, each with the
    /// `G`-valued transport along its tail.
    fn kite_leaves(&self, alpha: &LieValuedForm, kite: &Kite, k: u32) -> Result<Vec<(Simplex, Mat)>, MiError> {
        let spec = alpha.spec();
        let mut tail = spec.identity();
        for s in &kite.tail {
            tail *= self.rp_path_mat(alpha, s, k)?;
        }
        self.leaves_below(alpha, &kite.face, tail, 0, k)
    }

    fn leaves_below(&self, alpha: &LieValuedForm, face: &Simplex, tail: Mat, depth: u32, k: u32) -> Result<Vec<(Simplex, Mat)>, MiError> {
        if depth == k {
            return Ok(vec![(face.clone(), tail)]);
        }
        let parts = split_face(face);
        let child = |i: usize| -> Result<Vec<(Simplex, Mat)>, MiError> {
            let (f, route) = &parts[KITE_PRODUCT_ORDER[i]];
            let t = match route {
                Some(seg) => &tail * self.rp_path_mat(alpha, seg, k - depth - 1)?,
                None => tail.clone(),
            };
            self.leaves_below(alpha, f, t, depth + 1, k)
        };
        let kids: Vec<Vec<(Simplex, Mat)>> = if k - depth >= 3 {
            (0..4).into_par_iter().map(child).collect::<Result<_, _>>()?
        } else {
            (0..4).map(child).collect::<Result<_, _>>()?
        };
        Ok(kids.into_iter().flatten().collect())
    }

    /// Level-`k` surface Riemann product over a kite: `4^k` sub-kites, each
    /// contributing `exp_H(psi(MI(tail)) int_face beta)`.
    pub fn rp_surface(&self, conn: &TwoConnection, kite: &Kite, k: u32) -> Result<GroupElement, MiError> {
        check_form(&conn.beta, 2, &kite.face)?;
        let h = conn.cm.h();
        let leaves = self.kite_leaves(&conn.alpha, kite, k)?;
        let factors: Vec<Mat> = leaves
            .par_iter()
            .map(|(face, tail)| {
                let b = integrate_2form(&conn.beta, face)?;
                let m = conn.cm.psi(tail, &h.from_coords(&b));
                Ok(h.exp_mat(&m)?)
            })
            .collect::<Result<_, MiError>>()?;
        Ok(wrap(h, self.ordered_product(h, &factors)?))
    }

    pub fn mi_surface(&self, conn: &TwoConnection, kite: &Kite, tol: f64, k_max: u32) -> Result<MIResult, MiError> {
        self.converge(tol, k_max, |k| self.rp_surface(conn, kite, k))
    }

    /// Ordered product of the kites' level-`k` products.
    pub fn rp_surface_multi(&self, conn: &TwoConnection, surface: &Surface, k: u32) -> Result<GroupElement, MiError> {
        let h = conn.cm.h();
        let mut acc = h.identity();
        for kite in &surface.kites {
            acc *= self.rp_surface(conn, kite, k)?.into_matrix();
        }
        Ok(wrap(h, h.project(&acc)?))
    }

    pub fn mi_surface_multi(&self, conn: &TwoConnection, surface: &Surface, tol: f64, k_max: u32) -> Result<MIResult, MiError> {
        self.converge(tol, k_max, |k| self.rp_surface_multi(conn, surface, k))
    }

    /// Holonomy of `alpha` around the kite's lasso traversed against the
    /// face orientation: tail, reversed face boundary, tail back. Its value
    /// is the image of the surface holonomy under the boundary map.
    pub fn rp_kite_boundary(&self, alpha: &LieValuedForm, kite: &Kite, k: u32) -> Result<GroupElement, MiError> {
        let mut lasso: Vec<Simplex> = kite.tail.clone();
        lasso.extend(chains::reverse_path(&kite.boundary_loop()));
        lasso.extend(chains::reverse_path(&kite.tail));
        self.rp_path_chain(alpha, &lasso, k)
    }

    /// `dist(Phi(RP_k(kite)), RP_k(lasso))`.
    pub fn boundary_residual(&self, conn: &TwoConnection, kite: &Kite, k: u32) -> Result<f64, MiError> {
        let h = self.rp_surface(conn, kite, k)?;
        let g = self.rp_kite_boundary(&conn.alpha, kite, k)?;
        let phi = wrap(conn.cm.g(), conn.cm.phi(h.matrix()));
        Ok(group_dist(&phi, &g)?)
    }

    /// Product of the four face holonomies of a tetrahedron, each face a
    /// kite based at `v0`; the face opposite `v3` enters inverted.
    pub fn tet_boundary_product(&self, conn: &TwoConnection, f: &Simplex, k: u32) -> Result<GroupElement, MiError> {
        if f.dim() != 3 {
            return Err(MiError::SimplexDim { expected: 3, got: f.dim() });
        }
        let h = conn.cm.h();
        let kites = tet_face_kites(f)?;
        let mut acc = h.identity();
        for (i, kite) in kites.iter().enumerate() {
            let m = self.rp_surface(conn, kite, k)?;
            acc *= if i == 3 { m.inverse().into_matrix() } else { m.into_matrix() };
        }
        let g = wrap(h, h.project(&acc)?);
        Ok(if f.orientation() < 0 { g.inverse() } else { g })
    }

    /// `MI(Sigma_1)` against `MI(Sigma_0) exp_H(int_V H)` at each level; the
    /// filling is refined to the same level as the kites.
    pub fn stokes3_defect(&self, conn: &TwoConnection, pair: &SurfacePair, levels: &[u32]) -> Result<Stokes3Defect, MiError> {
        let hform = conn.three_curvature()?;
        let h = conn.cm.h();
        let mut per_level = vec![];
        for &k in levels {
            let m1 = self.rp_surface_multi(conn, &pair.sigma1, k)?;
            let m0 = self.rp_surface_multi(conn, &pair.sigma0, k)?;
            let vol = integrate_3form(&hform, &pair.filling.refined(k))?;
            let flux = h.exp_mat(vol.matrix())?;
            let rhs = wrap(h, m0.matrix() * flux);
            per_level.push(LevelDefect { k, defect: group_dist(&m1, &rhs)?, flux_norm: vol.norm() });
        }
        let defect = per_level.last().map(|l| l.defect).unwrap_or(0.0);
        Ok(Stokes3Defect { defect, per_level })
    }

    /// Holonomy of a closed surface at level `k`.
    pub fn closed_surface_mi(&self, conn: &TwoConnection, surface: &Surface, k: u32) -> Result<GroupElement, MiError> {
        let open = surface.boundary_edges().len();
        if open > 0 {
            return Err(MiError::NotClosed(open));
        }
        self.rp_surface_multi(conn, surface, k)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelDefect {
    pub k: u32,
    pub defect: f64,
    pub flux_norm: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Stokes3Defect {
    pub defect: f64,
    pub per_level: Vec<LevelDefect>,
}

/// Kites for the faces of a tetrahedron in product order, all based at
/// `v0`: the faces opposite `v1`, `v2`, `v0` with their boundary
/// orientation, then the face opposite `v3` with its vertex order
/// `(v0, v1, v2)`.
pub fn tet_face_kites(f: &Simplex) -> Result<Vec<Kite>, MiError> {
    let faces = f.with_orientation(1).boundary();
    let edge = Simplex::new(
        f.map().clone(),
        f.vertices()[..2].iter().map(|v| v[..f.map().domain_dim()].to_vec()).collect(),
        1,
    )?;
    let oriented = |i: usize| faces[i].0.with_orientation(faces[i].1 as i8).normalized();
    Ok(vec![
        Kite::new(vec![], oriented(1))?,
        Kite::new(vec![], oriented(2))?,
        Kite::new(vec![edge], oriented(0))?,
        Kite::new(vec![], faces[3].0.clone())?,
    ])
}

/// Signed sum over tets of the 4-point rule applied to `h`.
pub fn integrate_3form(h: &LieValuedForm, v: &Chain3) -> Result<AlgebraElement, MiError> {
    if h.degree() != 3 {
        return Err(MiError::Degree { expected: 3, got: h.degree() });
    }
    let spec = h.spec();
    let parts: Vec<Vec<f64>> = v
        .tets
        .par_iter()
        .map(|(t, s)| {
            check_form(h, 3, t)?;
            Ok(integrate_3form_simplex(h, t)?.into_iter().map(|x| x * *s as f64).collect())
        })
        .collect::<Result<_, MiError>>()?;
    let mut total = vec![0.0; spec.dim()];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    Ok(AlgebraElement::from_coords(spec.clone(), &total))
}

pub fn rp_path(alpha: &LieValuedForm, sigma: &Simplex, k: u32) -> Result<GroupElement, MiError> {
    Engine::default().rp_path(alpha, sigma, k)
}

pub fn mi_path(alpha: &LieValuedForm, sigma: &Simplex, tol: f64, k_max: u32) -> Result<MIResult, MiError> {
    Engine::default().mi_path(alpha, sigma, tol, k_max)
}

pub fn rp_surface(conn: &TwoConnection, kite: &Kite, k: u32) -> Result<GroupElement, MiError> {
    Engine::default().rp_surface(conn, kite, k)
}

pub fn mi_surface(conn: &TwoConnection, kite: &Kite, tol: f64, k_max: u32) -> Result<MIResult, MiError> {
    Engine::default().mi_surface(conn, kite, tol, k_max)
}

pub fn tet_boundary_product(conn: &TwoConnection, f: &Simplex, k: u32) -> Result<GroupElement, MiError> {
    Engine::default().tet_boundary_product(conn, f, k)
}

pub fn stokes3_defect(conn: &TwoConnection, pair: &SurfacePair, levels: &[u32]) -> Result<Stokes3Defect, MiError> {
    Engine::default().stokes3_defect(conn, pair, levels)
}

pub fn closed_surface_mi(conn: &TwoConnection, surface: &Surface, k: u32) -> Result<GroupElement, MiError> {
    Engine::default().closed_surface_mi(conn, surface, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{box_closed_surface, box_map, box_surface_pair, subdivide_kite, SymbolicMap};
    use crate::crossed::{abelian_bu1, identity_su2, CrossedModule};
    use crate::forms::fake_flat_beta;
    use crate::lie::frobenius_norm;
    use num_complex::Complex64;

    fn cm(m: CrossedModule) -> Arc<CrossedModule> {
        Arc::new(m)
    }

    fn u1_phase(g: &GroupElement) -> Complex64 {
        g.matrix()[(0, 0)]
    }

    fn unit_triangle() -> Simplex {
        Simplex::affine(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn grid(n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut pts = vec![];
        for i in 0..n {
            for j in 0..n {
                let mut p = vec![0.3 + 0.1 * i as f64, -0.2 + 0.15 * j as f64];
                if dim == 3 {
                    p.push(0.1 * (i + j) as f64);
                }
                pts.push(p);
            }
        }
        pts
    }

    fn abelian_conn(beta: &[(&str, usize, &[usize])], dim: usize) -> TwoConnection {
        let m = cm(abelian_bu1());
        let a = LieValuedForm::zero(m.g().clone(), dim, 1);
        let b = LieValuedForm::parse(m.h().clone(), dim, 2, beta).unwrap();
        TwoConnection::new(m, a, b, &grid(3, dim), false).unwrap()
    }

    fn su2_conn(alpha: &[(&str, usize, &[usize])], dim: usize) -> TwoConnection {
        let m = cm(identity_su2());
        let a = LieValuedForm::parse(m.g().clone(), dim, 1, alpha).unwrap();
        let b = fake_flat_beta(&m, &a, None).unwrap();
        TwoConnection::new(m, a, b, &grid(3, dim), false).unwrap()
    }

    #[test]
    fn abelian_path_closed_form() {
        let spec = Arc::new(GroupSpec::u1());
        let alpha = LieValuedForm::parse(spec, 1, 1, &[("0.3", 0, &[0])]).unwrap();
        let sigma = Simplex::parse(1, &["s"]).unwrap();
        let g = rp_path(&alpha, &sigma, 4).unwrap();
        assert!((u1_phase(&g) - Complex64::from_polar(1.0, 0.3)).norm() < 1e-12);
        let r = mi_path(&alpha, &sigma, 1e-6, 7).unwrap();
        assert!(r.converged);
        let zero = LieValuedForm::zero(alpha.spec().clone(), 1, 1);
        for k in 0..4 {
            assert_eq!(rp_path(&zero, &sigma, k).unwrap().matrix(), &alpha.spec().identity());
        }
    }

    #[test]
    fn subdivision_invariance_and_reductions_agree() {
        let spec = Arc::new(GroupSpec::su2());
        let alpha = LieValuedForm::parse(spec.clone(), 2, 1, &[("0.4*cos(y)", 0, &[0]), ("0.3*x", 1, &[1]), ("0.2*x*y", 2, &[0])]).unwrap();
        let sigma = Simplex::parse(1, &["s", "s^2"]).unwrap();
        let e = Engine::deterministic();
        for k in 1..6 {
            let whole = e.rp_path(&alpha, &sigma, k).unwrap();
            let halves = chains::subdivide_path(&sigma, 1);
            let parts = e.rp_path_chain(&alpha, &halves, k - 1).unwrap();
            assert!(group_dist(&whole, &parts).unwrap() < 1e-14);
        }
        let pieces = chains::subdivide_path(&sigma, 9);
        let factors = e.path_factors(&alpha, &pieces).unwrap();
        let a = Engine::deterministic().ordered_product(&spec, &factors).unwrap();
        let b = Engine::parallel().ordered_product(&spec, &factors).unwrap();
        assert!(frobenius_norm(&(a - b)) < 1e-12);
    }

    #[test]
    fn path_convergence_order_is_at_least_one() {
        let spec = Arc::new(GroupSpec::su2());
        let alpha = LieValuedForm::parse(spec, 2, 1, &[("0.4", 0, &[0]), ("0.4", 1, &[1]), ("0.3*y", 2, &[0])]).unwrap();
        let sigma = Simplex::parse(1, &["s", "sin(2*s)"]).unwrap();
        let r = mi_path(&alpha, &sigma, 1e-12, 7).unwrap();
        assert!(r.observed_order.unwrap() >= 0.9, "{:?}", r.diffs);
        assert_eq!(r.diffs.len(), r.per_level.len() - 1);
    }

    #[test]
    fn abelian_surface_levels_agree() {
        let conn = abelian_conn(&[("0.7", 0, &[0, 1])], 2);
        let kite = Kite::bare(unit_triangle()).unwrap();
        for k in 0..4 {
            let g = rp_surface(&conn, &kite, k).unwrap();
            assert!((u1_phase(&g) - Complex64::from_polar(1.0, 0.35)).norm() < 1e-13);
        }
        let r = mi_surface(&conn, &kite, 1e-6, 6).unwrap();
        assert!(r.converged && r.per_level.len() == 2);
    }

    #[test]
    fn zero_beta_and_degenerate_faces_give_identity() {
        let conn = su2_conn(&[("0", 0, &[0])], 2);
        let kite = Kite::bare(unit_triangle()).unwrap();
        assert!(frobenius_norm(&(rp_surface(&conn, &kite, 3).unwrap().into_matrix() - conn.cm.h().identity())) < 1e-15);
        let conn = su2_conn(&[("0.3*y", 0, &[0]), ("0.2*x", 1, &[1]), ("0.1", 2, &[1])], 2);
        let flat = Simplex::parse(2, &["s + t", "(s + t)^2"]).unwrap();
        let kite = Kite::bare(flat).unwrap();
        for k in 0..5 {
            let g = rp_surface(&conn, &kite, k).unwrap();
            assert!(frobenius_norm(&(g.into_matrix() - conn.cm.h().identity())) <= 1e-12);
        }
    }

    #[test]
    fn boundary_compatibility_residual_decays() {
        let conn = su2_conn(&[("0.3+0.1*y", 0, &[0]), ("0.3", 1, &[1]), ("0.1*x*y", 2, &[0])], 2);
        let kite = Kite::bare(unit_triangle()).unwrap();
        let res: Vec<f64> = (2..6).map(|k| Engine::default().boundary_residual(&conn, &kite, k).unwrap()).collect();
        for w in res.windows(2) {
            assert!(w[1] < 0.6 * w[0], "{res:?}");
        }
    }

    #[test]
    fn kite_product_matches_children() {
        let conn = su2_conn(&[("0.3*sin(y)", 0, &[0]), ("0.2*x", 1, &[1]), ("0.2", 2, &[0])], 2);
        let kite = Kite::bare(unit_triangle()).unwrap();
        let e = Engine::default();
        let whole = e.rp_surface(&conn, &kite, 3).unwrap();
        let kids = Surface::new(subdivide_kite(&kite));
        let parts = e.rp_surface_multi(&conn, &kids, 2).unwrap();
        // children carry parent tails evaluated one level coarser
        assert!(group_dist(&whole, &parts).unwrap() < 1e-3);
    }

    #[test]
    fn tet_product_and_volume_integral() {
        // d(z dx^dy) = dx^dy^dz
        let conn = abelian_conn(&[("z", 0, &[0, 1])], 3);
        let tet = Simplex::affine(&[vec![0.0, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        let g = tet_boundary_product(&conn, &tet, 0).unwrap();
        let v = 0.125 / 6.0;
        assert!((u1_phase(&g) - Complex64::from_polar(1.0, v)).norm() < 1e-12);
        let h = conn.three_curvature().unwrap();
        let chain = Chain3::new(vec![(tet.clone(), 1)]).unwrap();
        let i = integrate_3form(&h, &chain).unwrap();
        assert!((i.coordinates()[0] - v).abs() < 1e-14);
        assert!((integrate_3form(&h, &chain.negated()).unwrap().coordinates()[0] + v).abs() < 1e-14);
        let r = integrate_3form(&h, &chain.refined(2)).unwrap();
        assert!((r.coordinates()[0] - v).abs() < 1e-13);
        let cube = chains::triangulate_box(Arc::new(SymbolicMap::identity(3)), 1).unwrap();
        assert!((integrate_3form(&h, &cube).unwrap().coordinates()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_tet_product_is_identity() {
        let conn = su2_conn(&[("0.3*z", 0, &[0]), ("0.2*x", 1, &[1]), ("0.2*y", 2, &[2])], 3);
        let tet = Simplex::affine(&[vec![0.1, 0.0, 0.0], vec![0.6, 0.1, 0.0], vec![0.0, 0.5, 0.1], vec![0.1, 0.1, 0.5]]).unwrap();
        let id = conn.cm.h().identity();
        let d: Vec<f64> = (2..5)
            .map(|k| frobenius_norm(&(tet_boundary_product(&conn, &tet, k).unwrap().into_matrix() - &id)))
            .collect();
        assert!(d[2] < d[0], "{d:?}");
    }

    #[test]
    fn abelian_box_stokes_and_flux() {
        let conn = abelian_conn(&[("z", 0, &[0, 1])], 3);
        let pair = box_surface_pair(Arc::new(box_map([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]))).unwrap();
        let report = stokes3_defect(&conn, &pair, &[0, 1]).unwrap();
        assert!(report.defect < 1e-12, "{report:?}");
        let closed = box_closed_surface(Arc::new(box_map([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]))).unwrap();
        for (c, expect) in [(2.0 * std::f64::consts::PI, 0.0), (std::f64::consts::PI, 2.0)] {
            let conn = abelian_conn(&[(&format!("{c}*z"), 0, &[0, 1])], 3);
            let g = closed_surface_mi(&conn, &closed, 1).unwrap();
            let d = frobenius_norm(&(g.matrix() - conn.cm.h().identity()));
            assert!((d - expect).abs() < 1e-9, "{c}: {d}");
            let r = closed_surface_mi(&conn, &closed.reversed(), 1).unwrap();
            assert!(group_dist(&r, &g.inverse()).unwrap() < 1e-12);
        }
        let open = Surface::new(vec![Kite::bare(chains::flat_triangle(&[0.0; 3], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap()).unwrap()]);
        assert!(matches!(closed_surface_mi(&conn, &open, 0), Err(MiError::NotClosed(3))));
    }
}
