//! Axiom check of every catalog crossed module.

use surface_holonomy::crossed::{catalog, validate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["abelian_bu1", "identity_su2", "cover_su2_so3", "torus_su2_naive"] {
        let cm = catalog(name)?;
        let report = validate(&cm, 1000, 1e-10, 7)?;
        println!("{name}: {}", if report.pass { "ok" } else { "FAILS" });
        for a in &report.axioms {
            println!("  {:<26} {:.3e}", a.axiom, a.max_residual);
        }
    }
    Ok(())
}
