//! Global Stokes defect on the unit box and the local tetrahedron study.

use std::sync::Arc;

use surface_holonomy::chains::{box_map, box_surface_pair, Simplex};
use surface_holonomy::crossed::{abelian_bu1, identity_su2};
use surface_holonomy::forms::{fake_flat_beta, LieValuedForm, TwoConnection};
use surface_holonomy::mi::Engine;
use surface_holonomy::scenario::default_sample_points;
use surface_holonomy::verify::tet_slope_study;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pts = default_sample_points(3);
    let e = Engine::parallel();

    let cm = Arc::new(identity_su2());
    let alpha =
        LieValuedForm::parse(cm.g().clone(), 3, 1, &[("0.15 + 0.05*z", 0, &[0]), ("0.1*x", 1, &[1]), ("0.1*y", 2, &[2])])?;
    let beta = fake_flat_beta(&cm, &alpha, None)?;
    let conn = TwoConnection::new(cm, alpha, beta, &pts, false)?;
    let pair = box_surface_pair(Arc::new(box_map([0.0; 3], [1.0; 3])))?;
    let d = e.stokes3_defect(&conn, &pair, &[1, 2, 3])?;
    for l in &d.per_level {
        println!("su(2) box, level {}: defect {:.3e}", l.k, l.defect);
    }

    let u1 = Arc::new(abelian_bu1());
    let b = LieValuedForm::parse(
        u1.h().clone(),
        3,
        2,
        &[("0.4*sin(2*x + y + z)", 0, &[0, 1]), ("0.3*cos(x - z)", 0, &[1, 2])],
    )?;
    let a = LieValuedForm::zero(u1.g().clone(), 3, 1);
    let conn = TwoConnection::new(u1, a, b, &pts, false)?;
    let tet = Simplex::affine(&[
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.5, 0.866_025_403_784_438_6, 0.0],
        vec![0.5, 0.288_675_134_594_812_9, 0.816_496_580_927_726],
    ])?;
    let st = tet_slope_study(&conn, &tet, 2, &e)?;
    for (d, r) in st.diameters.iter().zip(&st.defects) {
        println!("tet diameter {d:.4}: defect {r:.3e}");
    }
    println!("defect slope {:.2}, flux slope {:.2}", st.defect_slope, st.flux_slope);
    Ok(())
}
