//! Path holonomy of a u(1) and an su(2) 1-form, with the composition law.

use std::sync::Arc;

use surface_holonomy::chains::{Simplex, SymbolicMap};
use surface_holonomy::forms::LieValuedForm;
use surface_holonomy::lie::{group_dist, GroupSpec};
use surface_holonomy::mi::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = Engine::default();

    let u1 = Arc::new(GroupSpec::u1());
    let a = LieValuedForm::parse(u1, 1, 1, &[("0.3", 0, &[0])])?;
    let unit = Simplex::standard(Arc::new(SymbolicMap::identity(1)));
    let r = e.mi_path(&a, &unit, 1e-12, 4)?;
    println!("u(1): value {:?}, converged {}", r.value.matrix()[(0, 0)], r.converged);

    let su2 = Arc::new(GroupSpec::su2());
    let alpha = LieValuedForm::parse(su2, 2, 1, &[("0.3*cos(y)", 0, &[0]), ("0.2*x", 1, &[1]), ("0.15*x*y", 2, &[0])])?;
    let first = Simplex::parse(1, &["s", "0.5*s*s"])?;
    let second = Simplex::parse(1, &["1 - 0.5*s", "0.5 + 0.5*sin(s)"])?;
    let whole = e.mi_path_chain(&alpha, &[first.clone(), second.clone()], 1e-6, 7)?;
    for (k, d) in whole.diffs.iter().enumerate() {
        println!("level {:>2}  diff {d:.3e}", k + 1);
    }
    let split = e.mi_path(&alpha, &first, 1e-6, 7)?.value.compose(&e.mi_path(&alpha, &second, 1e-6, 7)?.value)?;
    println!("composition residual {:.3e}", group_dist(&whole.value, &split)?);
    println!("observed order {:?}", whole.observed_order);
    Ok(())
}
