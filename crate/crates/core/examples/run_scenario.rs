//! Loads a scenario file and runs one command on it, as the CLI does.
//!
//! `cargo run --example run_scenario -- stokes3 scenarios/box_u1.json`

use surface_holonomy::cli::{load_scenario, run_command};
use surface_holonomy::verify::Settings;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let (command, path) = match args.as_slice() {
        [_, c, p] => (c.as_str(), p.as_str()),
        _ => ("path", concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/u1_path.json")),
    };
    let s = load_scenario(path.as_ref(), command)?;
    let report = run_command(command, &s, &Settings::from_scenario(&s).with_deterministic(true))?;
    for r in &report.records {
        println!("[{}] {} ({:.3e} vs {:.1e})", if r.pass { "pass" } else { "FAIL" }, r.identity, r.residual, r.threshold);
    }
    Ok(())
}
