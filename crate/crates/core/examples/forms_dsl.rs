//! Lie-valued forms: parsing, curvature, the fake-flat 2-form and the
//! 3-curvature.

use std::sync::Arc;

use surface_holonomy::crossed::{abelian_bu1, identity_su2};
use surface_holonomy::forms::{curvature, fake_flat_beta, LieValuedForm, TwoConnection};
use surface_holonomy::scenario::default_sample_points;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cm = Arc::new(identity_su2());
    let alpha = LieValuedForm::parse(cm.g().clone(), 3, 1, &[("0.3*y", 0, &[0]), ("0.2*z", 1, &[1]), ("0.1", 2, &[2])])?;
    let f = curvature(&alpha)?;
    println!("F_alpha has {} terms", f.terms().len());
    let p = [0.2, 0.4, 0.6];
    println!("F(e_x, e_y) at {p:?}: {:?}", f.eval_coords(&p, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]])?);

    let beta = fake_flat_beta(&cm, &alpha, None)?;
    let conn = TwoConnection::new(cm, alpha, beta, &default_sample_points(3), false)?;
    println!("fake-flat residual {:.3e}", conn.fake_flat_report.max_residual);
    println!("3-curvature vanishes: {}", conn.three_curvature()?.is_symbolically_zero());

    // abelian gerbe: H = dB
    let u1 = Arc::new(abelian_bu1());
    let b = LieValuedForm::parse(u1.h().clone(), 3, 2, &[("z*sin(x)", 0, &[0, 1])])?;
    let a = LieValuedForm::zero(u1.g().clone(), 3, 1);
    let h = TwoConnection::new(u1, a, b, &default_sample_points(3), false)?.three_curvature()?;
    println!("H = dB at {p:?}: {:?}", h.eval_coords(&p, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])?);
    Ok(())
}
