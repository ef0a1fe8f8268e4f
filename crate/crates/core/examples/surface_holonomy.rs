//! Surface holonomy of a kite and the boundary-compatibility residual.

use std::sync::Arc;

use surface_holonomy::chains::{Kite, Simplex};
use surface_holonomy::crossed::identity_su2;
use surface_holonomy::forms::{fake_flat_beta, LieValuedForm, TwoConnection};
use surface_holonomy::mi::Engine;
use surface_holonomy::scenario::default_sample_points;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cm = Arc::new(identity_su2());
    let alpha =
        LieValuedForm::parse(cm.g().clone(), 2, 1, &[("0.3 + 0.1*y", 0, &[0]), ("0.3", 1, &[1]), ("0.1*x*y", 2, &[0])])?;
    let beta = fake_flat_beta(&cm, &alpha, None)?;
    let conn = TwoConnection::new(cm, alpha, beta, &default_sample_points(2), false)?;

    let face = Simplex::affine(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let kite = Kite::bare(face)?;
    let e = Engine::default();
    let mi = e.mi_surface(&conn, &kite, 1e-4, 6)?;
    println!("surface holonomy {:?}", mi.summary().value);
    println!("k   boundary residual");
    for k in 0..=6 {
        println!("{k}   {:.3e}", e.boundary_residual(&conn, &kite, k)?);
    }
    Ok(())
}
