//! Closed-surface holonomy of an abelian gerbe at several total fluxes.

use std::f64::consts::PI;
use std::sync::Arc;

use surface_holonomy::chains::{box_closed_surface, box_map, subdivide_kite_levels};
use surface_holonomy::crossed::abelian_bu1;
use surface_holonomy::forms::{LieValuedForm, TwoConnection};
use surface_holonomy::lie::{group_dist, GroupElement};
use surface_holonomy::mi::{integrate_2form, Engine};
use surface_holonomy::scenario::default_sample_points;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cm = Arc::new(abelian_bu1());
    let b = LieValuedForm::parse(cm.h().clone(), 3, 2, &[("z", 0, &[0, 1]), ("0.5*x + 0.2*y", 0, &[1, 2])])?;
    let shell = box_closed_surface(Arc::new(box_map([0.0; 3], [1.0; 3])))?;
    let mut flux = 0.0;
    for kite in &shell.kites {
        for leaf in subdivide_kite_levels(kite, 1) {
            flux += integrate_2form(&b, &leaf.face)?[0];
        }
    }
    println!("template flux {flux:.6}");
    let a = LieValuedForm::zero(cm.g().clone(), 3, 1);
    let id = GroupElement::identity(cm.h().clone());
    for c in [2.0 * PI, PI, 3.0] {
        let conn = TwoConnection::new(cm.clone(), a.clone(), b.scale(c / flux), &default_sample_points(3), false)?;
        let g = Engine::default().closed_surface_mi(&conn, &shell, 1)?;
        println!("flux {c:.4}: distance to identity {:.6}", group_dist(&g, &id)?);
    }
    Ok(())
}
