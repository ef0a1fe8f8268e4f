//! Library results against independent hand-rolled references: plain 2x2
//! complex arithmetic, an RK4 transport ODE and brute-force quadrature.

use std::sync::Arc;

use num_complex::Complex64 as C;
use surface_holonomy::chains::{box_map, box_surface_pair, triangulate_box, Kite, Simplex};
use surface_holonomy::crossed::{abelian_bu1, cover_su2_so3, su2_to_so3};
use surface_holonomy::forms::{LieValuedForm, TwoConnection};
use surface_holonomy::lie::{GroupElement, GroupSpec, Mat};
use surface_holonomy::mi::{integrate_3form, Engine};
use surface_holonomy::scenario::default_sample_points;

type M2 = [[C; 2]; 2];

const I: C = C::new(0.0, 1.0);

fn pauli() -> [M2; 3] {
    let z = C::new(0.0, 0.0);
    let o = C::new(1.0, 0.0);
    [[[z, o], [o, z]], [[z, -I], [I, z]], [[o, z], [z, -o]]]
}

fn mul(a: &M2, b: &M2) -> M2 {
    let mut r = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn add(a: &M2, b: &M2, s: f64) -> M2 {
    let mut r = *a;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] += b[i][j] * s;
        }
    }
    r
}

/// `sum_a v_a (-i sigma_a / 2)`.
fn su2_alg(v: [f64; 3]) -> M2 {
    let s = pauli();
    let mut r = [[C::new(0.0, 0.0); 2]; 2];
    for a in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] += -I * 0.5 * v[a] * s[a][i][j];
            }
        }
    }
    r
}

/// `exp(v . E) = cos(|v|/2) - i sin(|v|/2) n . sigma`.
fn su2_exp(v: [f64; 3]) -> M2 {
    let t = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let s = pauli();
    let mut r = [[C::new((t / 2.0).cos(), 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new((t / 2.0).cos(), 0.0)]];
    if t > 0.0 {
        for a in 0..3 {
            r = add(&r, &s[a].map(|row| row.map(|x| -I * x)), (t / 2.0).sin() * v[a] / t);
        }
    }
    r
}

fn dist(a: &M2, m: &Mat) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (a[i][j] - m[(i, j)]).norm_sqr();
        }
    }
    s.sqrt()
}

#[test]
fn constant_su2_form_along_a_segment_is_one_exponential() {
    let su2 = Arc::new(GroupSpec::su2());
    let alpha = LieValuedForm::parse(su2, 2, 1, &[("0.4", 0, &[0]), ("-0.3", 2, &[0]), ("0.2", 1, &[1])]).unwrap();
    let seg = Simplex::affine(&[vec![0.1, 0.2], vec![0.9, 0.7]]).unwrap();
    let g = Engine::default().rp_path(&alpha, &seg, 3).unwrap();
    // integral: 0.8*(0.4, 0, -0.3) + 0.5*(0, 0.2, 0)
    let oracle = su2_exp([0.32, 0.1, -0.24]);
    assert!(dist(&oracle, g.matrix()) < 1e-13);
}

/// `dU/dt = U A(t)`, RK4.
fn transport_rk4(a: impl Fn(f64) -> M2, steps: usize) -> M2 {
    let mut u: M2 = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
    let h = 1.0 / steps as f64;
    for n in 0..steps {
        let t = n as f64 * h;
        let f = |u: &M2, t: f64| mul(u, &a(t));
        let k1 = f(&u, t);
        let k2 = f(&add(&u, &k1, h / 2.0), t + h / 2.0);
        let k3 = f(&add(&u, &k2, h / 2.0), t + h / 2.0);
        let k4 = f(&add(&u, &k3, h), t + h);
        u = add(&u, &k1, h / 6.0);
        u = add(&u, &k2, h / 3.0);
        u = add(&u, &k3, h / 3.0);
        u = add(&u, &k4, h / 6.0);
    }
    u
}

#[test]
fn nonabelian_path_holonomy_matches_rk4_transport() {
    let su2 = Arc::new(GroupSpec::su2());
    let alpha =
        LieValuedForm::parse(su2, 2, 1, &[("0.6*cos(y)", 0, &[0]), ("0.5*x", 1, &[1]), ("0.4*x*y", 2, &[0])]).unwrap();
    let curve = Simplex::parse(1, &["s", "s*s"]).unwrap();
    // pulled back along (s, s^2): x' = 1, y' = 2s
    let a = |s: f64| su2_alg([0.6 * (s * s).cos(), 0.5 * s * 2.0 * s, 0.4 * s * s * s]);
    let oracle = transport_rk4(a, 4000);
    let r = Engine::default().mi_path(&alpha, &curve, 1e-9, 10).unwrap();
    assert!(dist(&oracle, r.value.matrix()) < 1e-6, "{}", dist(&oracle, r.value.matrix()));
}

#[test]
fn cover_map_is_the_adjoint_rotation() {
    let u = su2_exp([0.7, -1.1, 0.4]);
    let um = Mat::from_fn(2, 2, |i, j| u[i][j]);
    let r = su2_to_so3(&um);
    let ud = [[u[0][0].conj(), u[1][0].conj()], [u[0][1].conj(), u[1][1].conj()]];
    for b in 0..3 {
        let mut e = [0.0; 3];
        e[b] = 1.0;
        let ad = mul(&mul(&u, &su2_alg(e)), &ud);
        // coordinate a of X in the basis -i sigma_a / 2 is i tr(sigma_a X)
        for a in 0..3 {
            let s = pauli()[a];
            let tr = mul(&s, &ad);
            let coord = (I * (tr[0][0] + tr[1][1])).re;
            assert!((coord - r[(a, b)].re).abs() < 1e-13);
        }
    }
    let cm = cover_su2_so3();
    assert!((cm.phi(&um) - &r).norm() < 1e-13);
}

/// Brute-force midpoint sum of `f` over the reference triangle.
fn triangle_sum(f: impl Fn(f64, f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n - i {
            let (x, y) = ((i as f64 + 1.0 / 3.0) * h, (j as f64 + 1.0 / 3.0) * h);
            s += f(x, y) * h * h / 2.0;
            if i + j + 1 < n {
                let (x, y) = ((i as f64 + 2.0 / 3.0) * h, (j as f64 + 2.0 / 3.0) * h);
                s += f(x, y) * h * h / 2.0;
            }
        }
    }
    s
}

#[test]
fn abelian_surface_holonomy_is_exp_of_the_flux() {
    let cm = Arc::new(abelian_bu1());
    let b = LieValuedForm::parse(cm.h().clone(), 2, 2, &[("0.7*sin(x + 2*y) + 0.2", 0, &[0, 1])]).unwrap();
    let a = LieValuedForm::zero(cm.g().clone(), 2, 1);
    let conn = TwoConnection::new(cm, a, b, &default_sample_points(2), false).unwrap();
    let kite = Kite::bare(Simplex::affine(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    let g = Engine::default().rp_surface(&conn, &kite, 5).unwrap();
    let flux = triangle_sum(|x, y| 0.7 * (x + 2.0 * y).sin() + 0.2, 2000);
    let oracle = C::from_polar(1.0, flux);
    assert!((g.matrix()[(0, 0)] - oracle).norm() < 1e-5, "{} vs {}", g.matrix()[(0, 0)], oracle);
}

#[test]
fn volume_integral_over_a_box_matches_the_analytic_value() {
    let u1 = Arc::new(GroupSpec::u1());
    // d of (x^2 z) dx^dy = x^2 dx^dy^dz; over [0,2]x[0,1]x[0,3]: 8/3 * 3
    let h = LieValuedForm::parse(u1, 3, 3, &[("x*x", 0, &[0, 1, 2])]).unwrap();
    let chain = triangulate_box(Arc::new(box_map([0.0; 3], [2.0, 1.0, 3.0])), 2).unwrap();
    let v = integrate_3form(&h, &chain).unwrap().coordinates()[0];
    assert!((v - 8.0).abs() < 1e-10, "{v}");
    assert!((chain.volume() - 6.0).abs() < 1e-12);
}

#[test]
fn abelian_box_ratio_is_exp_i_times_volume_integral() {
    let cm = Arc::new(abelian_bu1());
    let b = LieValuedForm::parse(cm.h().clone(), 3, 2, &[("x*z*z", 0, &[0, 1])]).unwrap();
    let a = LieValuedForm::zero(cm.g().clone(), 3, 1);
    let conn = TwoConnection::new(cm.clone(), a, b, &default_sample_points(3), false).unwrap();
    let pair = box_surface_pair(Arc::new(box_map([0.0; 3], [1.0; 3]))).unwrap();
    let e = Engine::default();
    let m1 = e.rp_surface_multi(&conn, &pair.sigma1, 3).unwrap();
    let m0 = e.rp_surface_multi(&conn, &pair.sigma0, 3).unwrap();
    let ratio = m1.compose(&m0.inverse()).unwrap();
    // int 2xz over the unit cube = 1/2
    let oracle = GroupElement::new(cm.h().clone(), Mat::from_element(1, 1, C::from_polar(1.0, 0.5))).unwrap();
    assert!((ratio.matrix() - oracle.matrix()).norm() < 1e-3);
}
