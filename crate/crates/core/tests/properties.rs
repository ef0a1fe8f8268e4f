//! Structural invariants over random inputs.

use std::sync::Arc;

use proptest::prelude::*;
use surface_holonomy::chains::{
    cancel_signed, reverse_path, signed_volume, subdivide_kite, subdivide_path, subdivide_tet, triangulate_box, box_map,
    Chain3, Kite, Simplex, Surface,
};
use surface_holonomy::crossed::{abelian_bu1, catalog, identity_su2, validate};
use surface_holonomy::forms::{fake_flat_beta, LieValuedForm, TwoConnection};
use surface_holonomy::lie::{exp_alg, group_dist, log_grp, AlgebraElement, GroupSpec};
use surface_holonomy::mi::Engine;
use surface_holonomy::scenario::default_sample_points;

fn coeff() -> impl Strategy<Value = f64> {
    (-0.5f64..0.5).prop_map(|v| (v * 1000.0).round() / 1000.0)
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2)
}

fn su2_form(c: &[f64]) -> LieValuedForm {
    let terms = [
        format!("{} * cos(y)", c[0]),
        format!("{} * x", c[1]),
        format!("{} + {} * x * y", c[2], c[3]),
    ];
    LieValuedForm::parse(
        Arc::new(GroupSpec::su2()),
        2,
        1,
        &[(terms[0].as_str(), 0, &[0]), (terms[1].as_str(), 1, &[1]), (terms[2].as_str(), 2, &[0])],
    )
    .unwrap()
}

fn su2_conn(c: &[f64]) -> TwoConnection {
    let cm = Arc::new(identity_su2());
    let alpha = su2_form(c);
    let beta = fake_flat_beta(&cm, &alpha, None).unwrap();
    TwoConnection::new(cm, alpha, beta, &default_sample_points(2), false).unwrap()
}

fn nondegenerate(p: &[Vec<f64>]) -> bool {
    let a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    a.abs() > 0.05
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exp_log_round_trip(v in prop::collection::vec(-1.5f64..1.5, 3)) {
        let spec = Arc::new(GroupSpec::su2());
        let x = AlgebraElement::from_coords(spec, &v);
        let back = log_grp(&exp_alg(&x).unwrap()).unwrap().coordinates();
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn riemann_products_split_at_the_midpoint(c in prop::collection::vec(coeff(), 4), a in point2(), b in point2(), k in 1u32..6) {
        let alpha = su2_form(&c);
        let e = Engine::default();
        let seg = Simplex::affine(&[a, b]).unwrap();
        let whole = e.rp_path(&alpha, &seg, k).unwrap();
        let halves = subdivide_path(&seg, 1);
        let parts = e.rp_path(&alpha, &halves[0], k - 1).unwrap().compose(&e.rp_path(&alpha, &halves[1], k - 1).unwrap()).unwrap();
        prop_assert!(group_dist(&whole, &parts).unwrap() < 1e-13);
        let back = e.rp_path_chain(&alpha, &reverse_path(std::slice::from_ref(&seg)), k).unwrap();
        prop_assert!(group_dist(&back, &whole.inverse()).unwrap() < 1e-13);
        prop_assert!(whole.membership_residual() < 1e-12);
    }

    #[test]
    fn kite_products_refine_exactly(c in prop::collection::vec(coeff(), 4), p in prop::collection::vec(point2(), 3), k in 1u32..4) {
        prop_assume!(nondegenerate(&p));
        let conn = su2_conn(&c);
        let kite = Kite::bare(Simplex::affine(&p).unwrap()).unwrap();
        let e = Engine::default();
        let whole = e.rp_surface(&conn, &kite, k).unwrap();
        let parts = e.rp_surface_multi(&conn, &Surface::new(subdivide_kite(&kite)), k - 1).unwrap();
        prop_assert!(group_dist(&whole, &parts).unwrap() < 1e-12);
        prop_assert!(whole.membership_residual() < 1e-12);
        let tree = Engine::parallel().rp_surface(&conn, &kite, k).unwrap();
        prop_assert!(group_dist(&whole, &tree).unwrap() < 1e-12);
    }

    #[test]
    fn abelian_constant_flux_is_signed_area(b in coeff(), p in prop::collection::vec(point2(), 3), k in 0u32..4) {
        let cm = Arc::new(abelian_bu1());
        let bs = b.to_string();
        let beta = LieValuedForm::parse(cm.h().clone(), 2, 2, &[(bs.as_str(), 0, &[0, 1])]).unwrap();
        let alpha = LieValuedForm::zero(cm.g().clone(), 2, 1);
        let conn = TwoConnection::new(cm, alpha, beta, &default_sample_points(2), false).unwrap();
        let face = Simplex::affine(&p).unwrap();
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
        let e = Engine::default();
        let g = e.rp_surface(&conn, &Kite::bare(face.clone()).unwrap(), k).unwrap();
        let z = g.matrix()[(0, 0)];
        prop_assert!((z.arg() - b * area).abs() < 1e-12);
        let r = e.rp_surface(&conn, &Kite::bare(face.with_orientation(-1)).unwrap(), k).unwrap();
        prop_assert!(group_dist(&r, &g.inverse()).unwrap() < 1e-12);
    }

    #[test]
    fn tet_refinement_preserves_volume_and_boundary(p in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 4)) {
        let tet = Simplex::affine(&p).unwrap();
        let v = signed_volume(&tet);
        prop_assume!(v.abs() > 1e-2);
        let kids = subdivide_tet(&tet);
        prop_assert_eq!(kids.len(), 8);
        let sum: f64 = kids.iter().map(signed_volume).sum();
        prop_assert!((sum - v).abs() < 1e-12);
        let chain = Chain3::new(vec![(tet.clone(), 1)]).unwrap();
        prop_assert_eq!(chain.refined(1).boundary_faces().len(), 16);
        prop_assert_eq!(chain.refined(1).unmatched_internal_faces(), 0);
    }

    #[test]
    fn catalog_axioms_hold_for_any_seed(seed in any::<u64>()) {
        for name in ["abelian_bu1", "identity_su2", "cover_su2_so3"] {
            let r = validate(&catalog(name).unwrap(), 40, 1e-10, seed).unwrap();
            prop_assert!(r.pass, "{name}: {:?}", r.axioms);
        }
    }
}

#[test]
fn boundary_of_boundary_cancels() {
    let tet = Simplex::affine(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let mut edges = vec![];
    for (f, s) in tet.boundary() {
        for (e, t) in f.boundary() {
            edges.push((e, s * t));
        }
    }
    assert!(cancel_signed(&edges).is_empty());
}

#[test]
fn box_triangulation_is_closed_under_refinement() {
    let chain = triangulate_box(Arc::new(box_map([0.0; 3], [1.0, 2.0, 0.5])), 1).unwrap();
    for k in 0..3 {
        let c = chain.refined(k);
        assert!((c.volume() - 1.0).abs() < 1e-12);
        assert_eq!(c.unmatched_internal_faces(), 0);
    }
}
