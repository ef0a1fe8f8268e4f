//! Parametric simplices, kites, subdivision, boundaries and triangulations.
//!
//! A [`Simplex`] is a map `f: R^m -> R^d` given by symbolic components in the
//! reference variables `s, t, u`, restricted to the affine simplex spanned by
//! its vertices in the domain. Subdivision only moves domain vertices, so all
//! pieces share one compiled map.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, add, mul, num, sub, Expr, ExprError, N_SLOTS, REF_OFFSET};
use crate::quadrature::{TET_4, TRIANGLE_3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("map components may only use reference variables s, t, u up to the domain dimension ({0})")]
    ForeignVariable(String),
    #[error("invalid simplex: {0}")]
    Simplex(String),
    #[error("kite invariant violated: tail ends {distance:.3e} away from the face base point")]
    Kite { distance: f64 },
    #[error("surface error: {0}")]
    Surface(String),
    #[error("surface pair boundary identity fails; unmatched faces: {0:?}")]
    Pair(Vec<String>),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Smooth map from a reference domain `R^m` (`m <= 3`) into `R^d`.
#[derive(Debug)]
pub struct SymbolicMap {
    domain_dim: usize,
    components: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
}

impl SymbolicMap {
    pub fn new(domain_dim: usize, components: Vec<Expr>) -> Result<Self, ChainError> {
        if domain_dim > 3 {
            return Err(ChainError::Simplex(format!("domain dimension {domain_dim} exceeds 3")));
        }
        if components.is_empty() || components.len() > 4 {
            return Err(ChainError::Simplex(format!("{} components; expected 1..=4", components.len())));
        }
        for c in &components {
            for v in c.variables() {
                if v < REF_OFFSET || v >= REF_OFFSET + domain_dim {
                    return Err(ChainError::ForeignVariable(format!("`{c}`")));
                }
            }
        }
        let jacobian = components.iter().map(|c| (0..domain_dim).map(|r| c.diff(REF_OFFSET + r)).collect()).collect();
        Ok(SymbolicMap { domain_dim, components, jacobian })
    }

    pub fn parse(domain_dim: usize, components: &[&str]) -> Result<Self, ChainError> {
        let comps = components.iter().map(|c| expr::parse_expr(c)).collect::<Result<Vec<_>, _>>()?;
        Self::new(domain_dim, comps)
    }

    /// `x_i = q_i`: the identity chart on `R^d`.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(|i| Expr::Var(REF_OFFSET + i)).collect()).expect("identity map")
    }

    /// Affine map sending the standard reference vertices to `points`.
    pub fn affine(points: &[Vec<f64>]) -> Result<Self, ChainError> {
        let n = points.len().saturating_sub(1);
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != d) {
            return Err(ChainError::Simplex("points of mixed dimension".into()));
        }
        let comps = (0..d)
            .map(|i| {
                let mut e = num(points[0][i]);
                for r in 0..n {
                    let delta = points[r + 1][i] - points[0][i];
                    e = add(e, mul(num(delta), Expr::Var(REF_OFFSET + r)));
                }
                e
            })
            .collect();
        Self::new(n, comps)
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    fn vars(&self, q: &[f64]) -> [f64; N_SLOTS] {
        let mut v = [0.0; N_SLOTS];
        for (i, x) in q.iter().enumerate().take(self.domain_dim) {
            v[REF_OFFSET + i] = *x;
        }
        v
    }

    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        let v = self.vars(q);
        self.components.iter().map(|c| c.eval_fast(&v)).collect()
    }

    /// `J[i][r] = d f_i / d q_r`.
    pub fn jacobian_at(&self, q: &[f64]) -> Vec<Vec<f64>> {
        let v = self.vars(q);
        self.jacobian.iter().map(|row| row.iter().map(|e| e.eval_fast(&v)).collect()).collect()
    }
}

pub type Point = [f64; 3];

/// A simplex: vertices in the domain of a shared map, plus an orientation.
#[derive(Debug, Clone)]
pub struct Simplex {
    map: Arc<SymbolicMap>,
    vertices: Vec<Point>,
    orientation: i8,
}

fn pad(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (i, x) in v.iter().enumerate().take(3) {
        p[i] = *x;
    }
    p
}

fn lerp(a: &Point, b: &Point, t: f64) -> Point {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn mid(a: &Point, b: &Point) -> Point {
    [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5]
}

fn det3(a: &Point, b: &Point, c: &Point) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn diff3(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl Simplex {
    pub fn new(map: Arc<SymbolicMap>, vertices: Vec<Vec<f64>>, orientation: i8) -> Result<Self, ChainError> {
        if vertices.is_empty() || vertices.len() > 4 {
            return Err(ChainError::Simplex(format!("{} vertices; expected 1..=4", vertices.len())));
        }
        if vertices.iter().any(|v| v.len() != map.domain_dim) {
            return Err(ChainError::Simplex("vertex dimension differs from the map's domain".into()));
        }
        if orientation != 1 && orientation != -1 {
            return Err(ChainError::Simplex("orientation must be +1 or -1".into()));
        }
        Ok(Simplex { map, vertices: vertices.iter().map(|v| pad(v)).collect(), orientation })
    }

    /// The map restricted to the standard reference simplex of its domain.
    pub fn standard(map: Arc<SymbolicMap>) -> Self {
        let m = map.domain_dim;
        let mut vs = vec![[0.0; 3]];
        for r in 0..m {
            let mut v = [0.0; 3];
            v[r] = 1.0;
            vs.push(v);
        }
        Simplex { map, vertices: vs, orientation: 1 }
    }

    /// Affine simplex through the given ambient points.
    pub fn affine(points: &[Vec<f64>]) -> Result<Self, ChainError> {
        Ok(Self::standard(Arc::new(SymbolicMap::affine(points)?)))
    }

    /// Parses components in `s, t, u` over the standard reference simplex.
    pub fn parse(dim: usize, components: &[&str]) -> Result<Self, ChainError> {
        Ok(Self::standard(Arc::new(SymbolicMap::parse(dim, components)?)))
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.map.ambient_dim()
    }

    pub fn map(&self) -> &Arc<SymbolicMap> {
        &self.map
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    pub fn with_orientation(&self, orientation: i8) -> Simplex {
        Simplex { orientation, ..self.clone() }
    }

    /// Same oriented simplex with orientation folded into the vertex order
    /// (first vertex kept when `dim >= 2`).
    pub fn normalized(&self) -> Simplex {
        if self.orientation == 1 {
            return self.clone();
        }
        let mut vs = self.vertices.clone();
        match vs.len() {
            2 => vs.swap(0, 1),
            3 | 4 => {
                let n = vs.len();
                vs.swap(n - 2, n - 1);
            }
            _ => return self.clone(),
        }
        Simplex { map: self.map.clone(), vertices: vs, orientation: 1 }
    }

    /// Domain point at reference barycentric parameters `lambda` (length `dim`).
    pub fn domain_point(&self, lambda: &[f64]) -> Point {
        let v0 = self.vertices[0];
        let mut q = v0;
        for (i, l) in lambda.iter().enumerate() {
            let vi = self.vertices[i + 1];
            for c in 0..3 {
                q[c] += l * (vi[c] - v0[c]);
            }
        }
        q
    }

    pub fn point(&self, lambda: &[f64]) -> Vec<f64> {
        self.map.eval(&self.domain_point(lambda))
    }

    pub fn vertex_point(&self, i: usize) -> Vec<f64> {
        self.map.eval(&self.vertices[i])
    }

    /// Ambient point and the tangent vectors `d f / d lambda_i`.
    pub fn point_and_tangents(&self, lambda: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let q = self.domain_point(lambda);
        let x = self.map.eval(&q);
        let j = self.map.jacobian_at(&q);
        let m = self.map.domain_dim;
        let v0 = self.vertices[0];
        let tangents = (1..self.vertices.len())
            .map(|i| {
                let e = diff3(&self.vertices[i], &v0);
                j.iter().map(|row| (0..m).map(|r| row[r] * e[r]).sum()).collect()
            })
            .collect();
        (x, tangents)
    }

    /// Components composed with the affine vertex parametrisation, as
    /// expressions in `s, t, u`.
    pub fn reference_components(&self) -> Vec<Expr> {
        let m = self.map.domain_dim;
        let v0 = self.vertices[0];
        let mut subs: Vec<Option<Expr>> = vec![None; N_SLOTS];
        for c in 0..m {
            let mut e = num(v0[c]);
            for i in 1..self.vertices.len() {
                let d = self.vertices[i][c] - v0[c];
                if d != 0.0 {
                    e = add(e, mul(num(d), Expr::Var(REF_OFFSET + i - 1)));
                }
            }
            subs[REF_OFFSET + c] = Some(e);
        }
        self.map.components.iter().map(|e| e.substitute(&subs)).collect()
    }

    /// Face omitting vertex `i`.
    pub fn face(&self, i: usize) -> Simplex {
        let mut vs = self.vertices.clone();
        vs.remove(i);
        Simplex { map: self.map.clone(), vertices: vs, orientation: self.orientation }
    }

    /// Faces with signs `(-1)^i` times the orientation; faces carry
    /// orientation `+1`.
    pub fn boundary(&self) -> Vec<(Simplex, i32)> {
        if self.dim() == 0 {
            return vec![];
        }
        (0..self.vertices.len())
            .map(|i| {
                let sign = if i % 2 == 0 { 1 } else { -1 } * self.orientation as i32;
                (self.face(i).with_orientation(1), sign)
            })
            .collect()
    }

    /// Reversed 1-simplex.
    pub fn reversed(&self) -> Simplex {
        let mut vs = self.vertices.clone();
        vs.reverse();
        Simplex { map: self.map.clone(), vertices: vs, orientation: self.orientation }
    }

    /// Domain-space determinant sign of the edge vectors (dim 3 only).
    fn domain_orientation(&self) -> f64 {
        let v = &self.vertices;
        det3(&diff3(&v[1], &v[0]), &diff3(&v[2], &v[0]), &diff3(&v[3], &v[0])).signum()
    }

    /// Max distance between ambient vertex images.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Vec<f64>> = (0..self.vertices.len()).map(|i| self.vertex_point(i)).collect();
        let mut d: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                d = d.max(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
            }
        }
        d
    }
}

pub type Path = Vec<Simplex>;

/// Reverses a path: pieces in opposite order, each reversed.
pub fn reverse_path(p: &[Simplex]) -> Path {
    p.iter().rev().map(|s| s.reversed()).collect()
}

/// `2^k` equal reference subintervals, in order.
pub fn subdivide_path(sigma: &Simplex, k: u32) -> Vec<Simplex> {
    let n = 1usize << k;
    let (a, b) = (sigma.vertices[0], sigma.vertices[1]);
    let scale = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let p = lerp(&a, &b, i as f64 * scale);
            let q = lerp(&a, &b, (i + 1) as f64 * scale);
            Simplex { map: sigma.map.clone(), vertices: vec![p, q], orientation: sigma.orientation }
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A tail path and a 2-simplex whose first vertex is the tail's end point.
#[derive(Debug, Clone)]
pub struct Kite {
    pub tail: Path,
    pub face: Simplex,
}

pub const KITE_TOLERANCE: f64 = 1e-12;

impl Kite {
    pub fn new(tail: Path, face: Simplex) -> Result<Self, ChainError> {
        if face.dim() != 2 {
            return Err(ChainError::Simplex(format!("kite face must be a 2-simplex, got dim {}", face.dim())));
        }
        if tail.iter().any(|s| s.dim() != 1) {
            return Err(ChainError::Simplex("kite tail must consist of 1-simplices".into()));
        }
        let face = face.normalized();
        let tail: Path = tail.iter().map(|s| s.normalized()).collect();
        for w in tail.windows(2) {
            let d = dist(&w[0].vertex_point(1), &w[1].vertex_point(0));
            if d > KITE_TOLERANCE {
                return Err(ChainError::Kite { distance: d });
            }
        }
        if let Some(last) = tail.last() {
            let d = dist(&last.vertex_point(1), &face.vertex_point(0));
            if d > KITE_TOLERANCE {
                return Err(ChainError::Kite { distance: d });
            }
        }
        Ok(Kite { tail, face })
    }

    /// Kite with an empty tail.
    pub fn bare(face: Simplex) -> Result<Self, ChainError> {
        Self::new(vec![], face)
    }

    pub fn base_point(&self) -> Vec<f64> {
        match self.tail.first() {
            Some(s) => s.vertex_point(0),
            None => self.face.vertex_point(0),
        }
    }

    /// Ambient length of the tail, measured on vertex chords.
    pub fn tail_length(&self) -> f64 {
        self.tail.iter().map(|s| dist(&s.vertex_point(0), &s.vertex_point(1))).sum()
    }

    /// Closed boundary loop of the face, starting at its first vertex and
    /// traversing edges in cyclic order.
    pub fn boundary_loop(&self) -> Path {
        let v = &self.face.vertices;
        let m = &self.face.map;
        [(0, 1), (1, 2), (2, 0)]
            .iter()
            .map(|&(a, b)| Simplex { map: m.clone(), vertices: vec![v[a], v[b]], orientation: 1 })
            .collect()
    }
}

/// Midpoint subdivision of a face into `(T0, Tm, T1, T2)` =
/// corner at `v0`, middle `(m01, m12, m02)`, corner at `v1`, corner at `v2`,
/// together with each child's route from the parent's first vertex.
pub fn split_face(face: &Simplex) -> [(Simplex, Option<Simplex>); 4] {
    let v = &face.vertices;
    let (m01, m12, m02) = (mid(&v[0], &v[1]), mid(&v[1], &v[2]), mid(&v[0], &v[2]));
    let map = &face.map;
    let tri = |a: Point, b: Point, c: Point| Simplex { map: map.clone(), vertices: vec![a, b, c], orientation: 1 };
    let seg = |a: Point, b: Point| Simplex { map: map.clone(), vertices: vec![a, b], orientation: 1 };
    [
        (tri(v[0], m01, m02), None),
        (tri(m01, m12, m02), Some(seg(v[0], m01))),
        (tri(m01, v[1], m12), Some(seg(v[0], m01))),
        (tri(m02, m12, v[2]), Some(seg(v[0], m02))),
    ]
}

/// Position in [`split_face`] output of the `i`-th factor of the ordered
/// product: `T2, T0, Tm, T1`.
pub const KITE_PRODUCT_ORDER: [usize; 4] = [3, 0, 1, 2];

/// Four sub-kites in product order; each tail is the parent tail followed by
/// the midpoint route to the child's first vertex.
pub fn subdivide_kite(kite: &Kite) -> Vec<Kite> {
    let parts = split_face(&kite.face);
    KITE_PRODUCT_ORDER
        .iter()
        .map(|&i| {
            let (face, route) = parts[i].clone();
            let mut tail = kite.tail.clone();
            tail.extend(route);
            Kite { tail, face }
        })
        .collect()
}

/// `4^k` sub-kites in product order.
pub fn subdivide_kite_levels(kite: &Kite, k: u32) -> Vec<Kite> {
    let mut level = vec![kite.clone()];
    for _ in 0..k {
        level = level.iter().flat_map(subdivide_kite).collect();
    }
    level
}

/// Edgewise 8-way split of a tetrahedron (corner tets, then the octahedron
/// cut along the `m02`-`m13` diagonal). Children carry orientations making
/// their signed volumes add up to the parent's.
pub fn subdivide_tet(f: &Simplex) -> Vec<Simplex> {
    let x = &f.vertices;
    let m = |a: usize, b: usize| mid(&x[a], &x[b]);
    let (x01, x02, x03, x12, x13, x23) = (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
    let children = [
        [x[0], x01, x02, x03],
        [x01, x[1], x12, x13],
        [x02, x12, x[2], x23],
        [x03, x13, x23, x[3]],
        [x01, x02, x03, x13],
        [x01, x02, x12, x13],
        [x02, x03, x13, x23],
        [x02, x12, x13, x23],
    ];
    let parent = f.domain_orientation();
    children
        .iter()
        .map(|c| {
            let s = Simplex { map: f.map.clone(), vertices: c.to_vec(), orientation: 1 };
            let o = (s.domain_orientation() * parent) as i8 * f.orientation;
            s.with_orientation(if o == 0 { 1 } else { o })
        })
        .collect()
}

/// Signed volume of a 3-simplex in a 3-dimensional ambient space, by the
/// 4-point tetrahedral rule on `det J`.
pub fn signed_volume(f: &Simplex) -> f64 {
    let mut v = 0.0;
    for (p, w) in TET_4.iter() {
        let (_, t) = f.point_and_tangents(p);
        let cols = [pad(&t[0]), pad(&t[1]), pad(&t[2])];
        v += w * det3(&cols[0], &cols[1], &cols[2]);
    }
    v * f.orientation as f64
}

/// Signed area of a 2-simplex in the plane.
pub fn signed_area(f: &Simplex) -> f64 {
    let mut a = 0.0;
    for (p, w) in TRIANGLE_3.iter() {
        let (_, t) = f.point_and_tangents(p);
        a += w * (t[0][0] * t[1][1] - t[0][1] * t[1][0]);
    }
    a * f.orientation as f64
}

/// True iff `|J_1 ^ J_2| <= 1e-10` at every sample point (quadrature points
/// and vertices).
pub fn degenerate(tau: &Simplex) -> bool {
    let mut pts: Vec<[f64; 2]> = TRIANGLE_3.iter().map(|(p, _)| *p).collect();
    pts.extend([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0 / 3.0, 1.0 / 3.0]]);
    pts.iter().all(|p| {
        let (_, t) = tau.point_and_tangents(p);
        let n = t[0].len();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = t[0][i] * t[1][j] - t[0][j] * t[1][i];
                s += w * w;
            }
        }
        s.sqrt() <= 1e-10
    })
}

/// Quantised domain coordinates, used to identify shared vertices.
pub type VertexKey = [i64; 3];

pub fn vertex_key(p: &Point) -> VertexKey {
    let q = |x: f64| (x * (1u64 << 40) as f64).round() as i64;
    [q(p[0]), q(p[1]), q(p[2])]
}

fn permutation_parity(keys: &[VertexKey]) -> i32 {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    let mut sign = 1;
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && keys[idx[j - 1]] > keys[idx[j]] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

/// Net signed multiset of simplices after cancelling opposite copies.
/// Returned simplices have orientation `+1` with the sign folded into the
/// vertex order, and are sorted by key.
pub fn cancel_signed(items: &[(Simplex, i32)]) -> Vec<(Simplex, i32)> {
    let mut acc: BTreeMap<Vec<VertexKey>, (Simplex, i32)> = BTreeMap::new();
    for (s, sign) in items {
        let keys: Vec<VertexKey> = s.vertices.iter().map(vertex_key).collect();
        let parity = permutation_parity(&keys);
        let mut sorted = keys.clone();
        sorted.sort();
        let mut vs = s.vertices.clone();
        vs.sort_by_key(vertex_key);
        let net = sign * parity * s.orientation as i32;
        let entry = acc
            .entry(sorted)
            .or_insert_with(|| (Simplex { map: s.map.clone(), vertices: vs, orientation: 1 }, 0));
        entry.1 += net;
    }
    acc.into_values()
        .filter(|(_, n)| *n != 0)
        .map(|(s, n)| {
            if n > 0 {
                (s, n)
            } else {
                (s.with_orientation(-1).normalized(), -n)
            }
        })
        .collect()
}

/// Signed list of 3-simplices.
#[derive(Debug, Clone)]
pub struct Chain3 {
    pub tets: Vec<(Simplex, i32)>,
}

impl Chain3 {
    pub fn new(tets: Vec<(Simplex, i32)>) -> Result<Self, ChainError> {
        if tets.iter().any(|(t, _)| t.dim() != 3) {
            return Err(ChainError::Simplex("a 3-chain needs 3-simplices".into()));
        }
        Ok(Chain3 { tets })
    }

    /// One level of edgewise refinement of every tet.
    pub fn refine(&self) -> Chain3 {
        Chain3 { tets: self.tets.iter().flat_map(|(t, s)| subdivide_tet(t).into_iter().map(move |c| (c, *s))).collect() }
    }

    pub fn refined(&self, k: u32) -> Chain3 {
        let mut c = self.clone();
        for _ in 0..k {
            c = c.refine();
        }
        c
    }

    pub fn negated(&self) -> Chain3 {
        Chain3 { tets: self.tets.iter().map(|(t, s)| (t.clone(), -s)).collect() }
    }

    /// All faces with signs, before cancellation.
    pub fn raw_faces(&self) -> Vec<(Simplex, i32)> {
        self.tets.iter().flat_map(|(t, s)| t.boundary().into_iter().map(move |(f, fs)| (f, fs * s))).collect()
    }

    /// Boundary faces after internal cancellation.
    pub fn boundary_faces(&self) -> Vec<(Simplex, i32)> {
        cancel_signed(&self.raw_faces())
    }

    /// Faces that appear more than once without cancelling to zero or
    /// plus/minus one, i.e. broken internal bookkeeping.
    pub fn unmatched_internal_faces(&self) -> usize {
        let mut count: HashMap<Vec<VertexKey>, (usize, i32)> = HashMap::new();
        for (f, s) in self.raw_faces() {
            let keys: Vec<VertexKey> = f.vertices.iter().map(vertex_key).collect();
            let parity = permutation_parity(&keys);
            let mut sorted = keys;
            sorted.sort();
            let e = count.entry(sorted).or_insert((0, 0));
            e.0 += 1;
            e.1 += s * parity * f.orientation as i32;
        }
        count.values().filter(|(n, net)| (*n >= 2 && *net != 0) || net.abs() > 1).count()
    }

    pub fn volume(&self) -> f64 {
        self.tets.iter().map(|(t, s)| *s as f64 * signed_volume(t)).sum()
    }
}

/// Kuhn split of the unit cube in the domain of `map` into 6 tets, refined
/// `k` times.
pub fn triangulate_box(map: Arc<SymbolicMap>, k: u32) -> Result<Chain3, ChainError> {
    if map.domain_dim != 3 {
        return Err(ChainError::Simplex("box map needs a 3-dimensional domain".into()));
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = vec![];
    for p in perms {
        let mut v = [0.0; 3];
        let mut vs = vec![v];
        for &axis in &p {
            v[axis] = 1.0;
            vs.push(v);
        }
        let s = Simplex { map: map.clone(), vertices: vs, orientation: 1 };
        let sign = s.domain_orientation() as i32;
        tets.push((s, sign));
    }
    Ok(Chain3 { tets }.refined(k))
}

/// Groups boundary faces of a box chain by the cube face they lie on:
/// key `(axis, side)` with `side` 0 or 1.
pub fn box_faces(chain: &Chain3) -> BTreeMap<(usize, u8), Vec<Simplex>> {
    let mut out: BTreeMap<(usize, u8), Vec<Simplex>> = BTreeMap::new();
    for (f, n) in chain.boundary_faces() {
        let f = if n < 0 { f.with_orientation(-1).normalized() } else { f };
        for axis in 0..3 {
            for side in [0u8, 1] {
                if f.vertices.iter().all(|v| v[axis] == side as f64) {
                    out.entry((axis, side)).or_default().push(f.clone());
                }
            }
        }
    }
    out
}

/// An ordered product of kites. For surfaces built by shelling, the product
/// order is the reverse of the lasso decomposition of the boundary loop.
#[derive(Debug, Clone)]
pub struct Surface {
    pub kites: Vec<Kite>,
}

impl Surface {
    pub fn new(kites: Vec<Kite>) -> Self {
        Surface { kites }
    }

    pub fn faces(&self) -> Vec<(Simplex, i32)> {
        self.kites.iter().map(|k| (k.face.clone(), 1)).collect()
    }

    /// Signed boundary edges after cancellation.
    pub fn boundary_edges(&self) -> Vec<(Simplex, i32)> {
        let edges: Vec<(Simplex, i32)> =
            self.kites.iter().flat_map(|k| k.face.boundary()).collect();
        cancel_signed(&edges)
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edges().is_empty()
    }

    /// Same surface with every face orientation reversed (product order
    /// reversed as well).
    pub fn reversed(&self) -> Surface {
        Surface {
            kites: self
                .kites
                .iter()
                .rev()
                .map(|k| Kite { tail: k.tail.clone(), face: k.face.with_orientation(-1).normalized() })
                .collect(),
        }
    }
}

struct Mesh {
    map: Arc<SymbolicMap>,
    points: Vec<Point>,
    ids: HashMap<VertexKey, usize>,
    tris: Vec<[usize; 3]>,
}

impl Mesh {
    fn new(map: Arc<SymbolicMap>, faces: &[Simplex]) -> Result<Self, ChainError> {
        let mut m = Mesh { map, points: vec![], ids: HashMap::new(), tris: vec![] };
        for f in faces {
            if f.dim() != 2 {
                return Err(ChainError::Surface("surface faces must be 2-simplices".into()));
            }
            if !Arc::ptr_eq(&f.map, &m.map) {
                return Err(ChainError::Surface("all faces must share one parametrisation".into()));
            }
            let f = f.normalized();
            let t = [m.id(&f.vertices[0]), m.id(&f.vertices[1]), m.id(&f.vertices[2])];
            m.tris.push(t);
        }
        Ok(m)
    }

    fn id(&mut self, p: &Point) -> usize {
        let key = vertex_key(p);
        if let Some(&i) = self.ids.get(&key) {
            return i;
        }
        self.points.push(*p);
        self.ids.insert(key, self.points.len() - 1);
        self.points.len() - 1
    }

    fn edge(&self, a: usize, b: usize) -> Simplex {
        Simplex { map: self.map.clone(), vertices: vec![self.points[a], self.points[b]], orientation: 1 }
    }

    fn tri(&self, a: usize, b: usize, c: usize) -> Simplex {
        Simplex { map: self.map.clone(), vertices: vec![self.points[a], self.points[b], self.points[c]], orientation: 1 }
    }

    /// Boundary loop (vertex sequence, closed) starting at `base`.
    fn boundary_loop(&self, tris: &[[usize; 3]], base: usize) -> Result<Vec<usize>, ChainError> {
        let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
        for t in tris {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut edges: Vec<(usize, usize)> = directed.keys().copied().collect();
        edges.sort_unstable();
        for (a, b) in edges {
            let back = directed.get(&(b, a)).copied().unwrap_or(0);
            if directed[&(a, b)] > back
                && next.insert(a, b).is_some() {
                    return Err(ChainError::Surface("boundary is not a simple loop".into()));
                }
        }
        if next.is_empty() {
            return Ok(vec![base]);
        }
        let mut loop_ = vec![base];
        let mut cur = base;
        for _ in 0..=next.len() {
            cur = *next
                .get(&cur)
                .ok_or_else(|| ChainError::Surface("base point is not on the boundary".into()))?;
            loop_.push(cur);
            if cur == base {
                break;
            }
        }
        if loop_.len() != next.len() + 1 || *loop_.last().unwrap() != base {
            return Err(ChainError::Surface("boundary has several components".into()));
        }
        Ok(loop_)
    }
}

fn free_reduce(w: &mut Vec<usize>) {
    let mut out: Vec<usize> = Vec::with_capacity(w.len());
    for &v in w.iter() {
        // a -> b -> a collapses to a
        if out.len() >= 2 && out[out.len() - 2] == v {
            out.pop();
            continue;
        }
        out.push(v);
    }
    *w = out;
}

/// Decomposes the disk's boundary loop (based at `base`) into lassos, one
/// per triangle, and returns the kites in product order.
fn shell(mesh: &Mesh, tris: &[[usize; 3]], start_loop: Vec<usize>) -> Result<Vec<Kite>, ChainError> {
    let mut remaining: Vec<[usize; 3]> = tris.to_vec();
    let mut lp = start_loop;
    let mut lassos: Vec<Kite> = vec![];
    while !remaining.is_empty() {
        let mut best: Option<(u8, usize, usize, usize)> = None;
        for i in 0..lp.len().saturating_sub(1) {
            let (u, w) = (lp[i], lp[i + 1]);
            for (ti, t) in remaining.iter().enumerate() {
                let rot = (0..3).find(|&r| t[r] == u && t[(r + 1) % 3] == w);
                let Some(r) = rot else { continue };
                let x = t[(r + 2) % 3];
                let ear = (i > 0 && lp[i - 1] == x) || (i + 2 < lp.len() && lp[i + 2] == x);
                let score = if ear {
                    0
                } else if !lp.contains(&x) {
                    1
                } else {
                    2
                };
                if best.is_none_or(|b| score < b.0) {
                    best = Some((score, i, ti, x));
                }
                break;
            }
            if matches!(best, Some((0, ..))) {
                break;
            }
        }
        let (_, i, ti, x) = best.ok_or_else(|| ChainError::Surface("surface is not shellable from this base point".into()))?;
        let (u, w) = (lp[i], lp[i + 1]);
        let tail = (0..i).map(|j| mesh.edge(lp[j], lp[j + 1])).collect();
        lassos.push(Kite { tail, face: mesh.tri(u, w, x) });
        lp.insert(i + 1, x);
        free_reduce(&mut lp);
        remaining.swap_remove(ti);
    }
    if lp.len() != 1 {
        return Err(ChainError::Surface("shelling left a nontrivial loop; surface is not a disk".into()));
    }
    lassos.reverse();
    Ok(lassos)
}

/// Builds a disk surface from oriented faces sharing one map, with all
/// tails starting at `base` (a boundary vertex, domain coordinates).
pub fn shell_disk(faces: &[Simplex], base: &[f64]) -> Result<(Surface, Path), ChainError> {
    let map = faces.first().ok_or_else(|| ChainError::Surface("no faces".into()))?.map.clone();
    let mut mesh = Mesh::new(map, faces)?;
    let b = *mesh
        .ids
        .get(&vertex_key(&pad(base)))
        .ok_or_else(|| ChainError::Surface("base point is not a mesh vertex".into()))?;
    let _ = mesh.id(&pad(base));
    let tris = mesh.tris.clone();
    let lp = mesh.boundary_loop(&tris, b)?;
    if lp.len() == 1 {
        return Err(ChainError::Surface("surface is closed; use shell_closed".into()));
    }
    let gamma = lp.windows(2).map(|w| mesh.edge(w[0], w[1])).collect();
    Ok((Surface { kites: shell(&mesh, &tris, lp)? }, gamma))
}

/// Builds a closed surface: a disk shelled from the boundary of a last face
/// at `base`, followed by that face.
pub fn shell_closed(faces: &[Simplex], base: &[f64]) -> Result<Surface, ChainError> {
    let map = faces.first().ok_or_else(|| ChainError::Surface("no faces".into()))?.map.clone();
    let mesh = Mesh::new(map, faces)?;
    let b = *mesh
        .ids
        .get(&vertex_key(&pad(base)))
        .ok_or_else(|| ChainError::Surface("base point is not a mesh vertex".into()))?;
    let surface = Surface { kites: faces.iter().map(|f| Kite { tail: vec![], face: f.normalized() }).collect() };
    if !surface.is_closed() {
        return Err(ChainError::Surface("surface is not closed".into()));
    }
    let last_idx = mesh
        .tris
        .iter()
        .position(|t| t.contains(&b))
        .ok_or_else(|| ChainError::Surface("base point is not a mesh vertex".into()))?;
    let t = mesh.tris[last_idx];
    let r = (0..3).find(|&r| t[r] == b).expect("contains base");
    let (p, q) = (t[(r + 1) % 3], t[(r + 2) % 3]);
    let mut rest = mesh.tris.clone();
    rest.remove(last_idx);
    let mut kites = shell(&mesh, &rest, vec![b, q, p, b])?;
    kites.push(Kite { tail: vec![], face: mesh.tri(b, p, q) });
    Ok(Surface { kites })
}

/// Two surfaces with a common boundary loop and a filling 3-chain with
/// `boundary(filling) = sigma1 - sigma0`.
#[derive(Debug, Clone)]
pub struct SurfacePair {
    pub sigma0: Surface,
    pub sigma1: Surface,
    pub gamma: Path,
    pub filling: Chain3,
}

fn face_label(s: &Simplex) -> String {
    let pts: Vec<String> = (0..s.vertices.len())
        .map(|i| {
            let p = s.vertex_point(i);
            format!("({})", p.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "))
        })
        .collect();
    pts.join(" -> ")
}

impl SurfacePair {
    /// Validates both boundary identities and reports unmatched faces.
    pub fn new(sigma0: Surface, sigma1: Surface, gamma: Path, filling: Chain3) -> Result<Self, ChainError> {
        let mut diff: Vec<(Simplex, i32)> = filling.boundary_faces();
        diff.extend(sigma1.faces().into_iter().map(|(f, s)| (f, -s)));
        diff.extend(sigma0.faces());
        let unmatched = cancel_signed(&diff);
        if !unmatched.is_empty() {
            return Err(ChainError::Pair(unmatched.iter().map(|(f, n)| format!("{n:+} {}", face_label(f))).collect()));
        }
        let g: Vec<(Simplex, i32)> = gamma.iter().map(|e| (e.clone(), 1)).collect();
        for (name, s) in [("sigma0", &sigma0), ("sigma1", &sigma1)] {
            let mut d = s.boundary_edges();
            d.extend(g.iter().map(|(e, n)| (e.clone(), -n)));
            let bad = cancel_signed(&d);
            if !bad.is_empty() {
                return Err(ChainError::Pair(
                    bad.iter().map(|(f, n)| format!("{name} boundary edge {n:+} {}", face_label(f))).collect(),
                ));
            }
        }
        Ok(SurfacePair { sigma0, sigma1, gamma, filling })
    }
}

/// The bottom face (`axis = 2, side = 0`) of a box map against the other
/// five faces, filled by the box's Kuhn triangulation. Tails start at the
/// domain corner `(0, 0, 0)`.
pub fn box_surface_pair(map: Arc<SymbolicMap>) -> Result<SurfacePair, ChainError> {
    let chain = triangulate_box(map, 0)?;
    let faces = box_faces(&chain);
    let mut bottom = vec![];
    let mut rest = vec![];
    for ((axis, side), fs) in faces {
        if axis == 2 && side == 0 {
            // boundary(V) = sigma1 - sigma0, so sigma0 is the bottom reversed
            bottom.extend(fs.iter().map(|f| f.with_orientation(-1).normalized()));
        } else {
            rest.extend(fs);
        }
    }
    let base = [0.0, 0.0, 0.0];
    let (sigma0, gamma) = shell_disk(&bottom, &base)?;
    let (sigma1, _) = shell_disk(&rest, &base)?;
    SurfacePair::new(sigma0, sigma1, gamma, chain)
}

/// All six faces of a box map as a closed surface based at the domain
/// origin, outward oriented.
pub fn box_closed_surface(map: Arc<SymbolicMap>) -> Result<Surface, ChainError> {
    let chain = triangulate_box(map, 0)?;
    let faces: Vec<Simplex> = box_faces(&chain).into_values().flatten().collect();
    shell_closed(&faces, &[0.0, 0.0, 0.0])
}

/// The map `(s, t) -> (s, t, f(s, t))` for `z = f(x, y)` given in `x, y`.
pub fn graph_surface_map(f: &Expr) -> Result<SymbolicMap, ChainError> {
    let mut subs: Vec<Option<Expr>> = vec![None; N_SLOTS];
    subs[0] = Some(Expr::Var(REF_OFFSET));
    subs[1] = Some(Expr::Var(REF_OFFSET + 1));
    let z = f.substitute(&subs);
    SymbolicMap::new(2, vec![Expr::Var(REF_OFFSET), Expr::Var(REF_OFFSET + 1), z])
}

/// `(s, t) -> (s, t, 0)` style flat triangle from three ambient points.
pub fn flat_triangle(p0: &[f64], p1: &[f64], p2: &[f64]) -> Result<Simplex, ChainError> {
    Simplex::affine(&[p0.to_vec(), p1.to_vec(), p2.to_vec()])
}

/// Affine box map `q -> origin + diag(size) q` (3D).
pub fn box_map(origin: [f64; 3], size: [f64; 3]) -> SymbolicMap {
    let comps = (0..3).map(|i| add(num(origin[i]), mul(num(size[i]), Expr::Var(REF_OFFSET + i)))).collect();
    SymbolicMap::new(3, comps).expect("box map")
}

/// Box map with an interior bump that vanishes on the boundary of the cube;
/// gives a second filling of the same boundary.
pub fn bumped_box_map(origin: [f64; 3], size: [f64; 3], amplitude: f64) -> SymbolicMap {
    let q = |i: usize| Expr::Var(REF_OFFSET + i);
    let bubble = (0..3).fold(num(amplitude), |acc, i| mul(acc, mul(q(i), sub(num(1.0), q(i)))));
    let comps = (0..3)
        .map(|i| {
            let base = add(num(origin[i]), mul(num(size[i]), q(i)));
            if i == 2 {
                add(base, mul(num(size[2]), bubble.clone()))
            } else {
                base
            }
        })
        .collect();
    SymbolicMap::new(3, comps).expect("bumped box map")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> Simplex {
        Simplex::affine(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn path_subdivision() {
        let s = Simplex::parse(1, &["s"]).unwrap();
        assert_eq!(subdivide_path(&s, 0).len(), 1);
        let pieces = subdivide_path(&s, 2);
        let breaks: Vec<f64> = pieces.iter().skip(1).map(|p| p.vertex_point(0)[0]).collect();
        assert_eq!(breaks, vec![0.25, 0.5, 0.75]);
        for w in subdivide_path(&s, 5).windows(2) {
            assert_eq!(w[0].vertices()[1], w[1].vertices()[0]);
        }
    }

    #[test]
    fn kite_subdivision_areas_and_tails() {
        let k = Kite::bare(unit_triangle()).unwrap();
        let kids = subdivide_kite(&k);
        for c in &kids {
            assert!((signed_area(&c.face) - 0.125).abs() < 1e-15);
            Kite::new(c.tail.clone(), c.face.clone()).unwrap();
        }
        let sixteen = subdivide_kite_levels(&k, 2);
        assert_eq!(sixteen.len(), 16);
        // tiling: interior edges cancel, boundary is the parent's boundary
        let s = Surface::new(sixteen.clone());
        let edges = s.boundary_edges();
        let parent = Surface::new(vec![k.clone()]).boundary_edges();
        let total: usize = parent.len();
        assert_eq!(edges.len(), total * 4);
        let area: f64 = sixteen.iter().map(|c| signed_area(&c.face)).sum();
        assert!((area - 0.5).abs() < 1e-14);
        for c in &sixteen {
            assert!(c.tail_length() <= 2.0 * std::f64::consts::SQRT_2);
        }
    }

    #[test]
    fn boundary_squared_vanishes() {
        let tet = Simplex::affine(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        for s in [tet.clone(), tet.face(0), tet.face(0).face(1)] {
            let bb: Vec<(Simplex, i32)> =
                s.boundary().into_iter().flat_map(|(f, sg)| f.boundary().into_iter().map(move |(g, s2)| (g, s2 * sg))).collect();
            assert!(cancel_signed(&bb).is_empty());
        }
        let edge = tet.face(0).face(0);
        let b = edge.boundary();
        assert_eq!(b[0].1, 1);
        assert_eq!(b[1].1, -1);
        assert_eq!(b[0].0.vertices()[0], edge.vertices()[1]);
    }

    #[test]
    fn tet_subdivision() {
        let tet = Simplex::affine(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let kids = subdivide_tet(&tet);
        let vol: f64 = kids.iter().map(signed_volume).sum();
        assert!((vol - 1.0 / 6.0).abs() < 1e-12);
        let chain = Chain3::new(kids.into_iter().map(|k| (k, 1)).collect()).unwrap();
        assert_eq!(chain.unmatched_internal_faces(), 0);
        assert_eq!(chain.boundary_faces().len(), 16);
        // Kuhn tets halve their diameter
        let cube = triangulate_box(Arc::new(SymbolicMap::identity(3)), 0).unwrap();
        for (t, _) in &cube.tets {
            let d = t.diameter();
            for c in subdivide_tet(t) {
                assert!(c.diameter() <= d / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn box_triangulation() {
        let map = Arc::new(box_map([0.0, 0.0, 0.0], [1.0, 2.0, 0.5]));
        let c0 = triangulate_box(map.clone(), 0).unwrap();
        assert_eq!(c0.tets.len(), 6);
        assert!((c0.volume() - 1.0).abs() < 1e-12);
        assert_eq!(c0.boundary_faces().len(), 12);
        assert_eq!(c0.unmatched_internal_faces(), 0);
        let c1 = c0.refine();
        assert_eq!(c1.tets.len(), 48);
        assert!((c1.volume() - 1.0).abs() < 1e-10);
        assert_eq!(c1.boundary_faces().len(), 48);
        let faces = box_faces(&c1);
        assert_eq!(faces.len(), 6);
        assert!(faces.values().all(|f| f.len() == 8));
        assert!((c0.negated().volume() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degeneracy() {
        let constant = Simplex::parse(2, &["1", "2"]).unwrap();
        assert!(degenerate(&constant));
        let curve = Simplex::parse(2, &["s + t", "(s + t)^2"]).unwrap();
        assert!(degenerate(&curve));
        assert!(!degenerate(&unit_triangle()));
    }

    #[test]
    fn pair_construction_and_rejection() {
        let map = Arc::new(box_map([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]));
        let pair = box_surface_pair(map.clone()).unwrap();
        assert_eq!(pair.sigma0.kites.len(), 2);
        assert_eq!(pair.sigma1.kites.len(), 10);
        assert_eq!(pair.gamma.len(), 4);
        for k in pair.sigma0.kites.iter().chain(&pair.sigma1.kites) {
            Kite::new(k.tail.clone(), k.face.clone()).unwrap();
            assert!(k.base_point().iter().all(|x| x.abs() < 1e-15));
        }
        let err = SurfacePair::new(pair.sigma1.clone(), pair.sigma0.clone(), pair.gamma.clone(), pair.filling.clone());
        assert!(matches!(err, Err(ChainError::Pair(ref v)) if !v.is_empty()));
        let closed = box_closed_surface(map).unwrap();
        assert_eq!(closed.kites.len(), 12);
        assert!(closed.is_closed());
    }

    #[test]
    fn kite_invariant_is_enforced() {
        let face = unit_triangle();
        let bad_tail = vec![Simplex::affine(&[vec![0.5, 0.5], vec![0.2, 0.0]]).unwrap()];
        assert!(matches!(Kite::new(bad_tail, face.clone()), Err(ChainError::Kite { .. })));
        let good = vec![Simplex::affine(&[vec![0.5, 0.5], vec![0.0, 0.0]]).unwrap()];
        assert!(Kite::new(good, face).is_ok());
    }

    #[test]
    fn graph_surface_and_foreign_variables() {
        let m = graph_surface_map(&expr::parse_expr("x*y").unwrap()).unwrap();
        assert_eq!(m.eval(&[0.5, 0.4]), vec![0.5, 0.4, 0.2]);
        assert!(matches!(SymbolicMap::parse(1, &["t"]), Err(ChainError::ForeignVariable(_))));
        assert!(SymbolicMap::parse(2, &["x"]).is_err());
    }
}
