//! Finite-difference gauge variation of the 3-curvature against the
//! predicted infinitesimal action.

use surface_holonomy::crossed::identity_su2;
use surface_holonomy::expr::parse_expr;
use surface_holonomy::forms::{gauge_variation_check, LieValuedForm};
use surface_holonomy::scenario::default_sample_points;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cm = identity_su2();
    let alpha = LieValuedForm::parse(cm.g().clone(), 3, 1, &[("0.3*y", 0, &[0]), ("0.2*z", 1, &[1]), ("0.25*x", 2, &[2])])?;
    let beta =
        LieValuedForm::parse(cm.h().clone(), 3, 2, &[("0.2*x*z", 0, &[0, 1]), ("0.3*sin(y)", 1, &[1, 2])])?;
    let lambda = vec![parse_expr("0.4*x + 0.1")?, parse_expr("0.3*y*z")?, parse_expr("0.2*cos(z)")?];
    let pts = default_sample_points(3);
    for step in [1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let r = gauge_variation_check(&cm, &alpha, &beta, &lambda, step, &pts)?;
        println!("h = {step:.2e}: residual {:.3e} of predicted {:.3e}", r.residual, r.predicted_norm);
    }
    Ok(())
}
