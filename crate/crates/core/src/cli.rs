//! Command-line front end. Exit codes: 0 all checks pass, 1 a check failed
//! or a computation broke down, 2 usage or scenario error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::scenario::{parse_file_text, Scenario, ScenarioError};
use crate::verify::{self, Report, Settings, VerifyError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "holonomy", version, about = "Path and surface holonomy by multiplicative integration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, PartialEq)]
pub enum Command {
    /// Check the crossed-module axioms and fake flatness.
    Validate(Common),
    /// Path holonomy with composition and inversion checks.
    Path(Common),
    /// Surface holonomy of a kite with the 2-functor checks.
    Surface(Common),
    /// Boundary compatibility residual over levels.
    Stokes2(Common),
    /// Local and global 3-dimensional Stokes checks.
    Stokes3(Common),
    /// Closed-surface holonomy against flux quantisation.
    Wz(Common),
    /// Gauge covariance of the 3-curvature.
    Gauge(Common),
    /// Level-by-level convergence tables.
    Converge(Common),
}

#[derive(Debug, Clone, Copy, Args, PartialEq, Eq)]
pub struct CommonFlags {
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sequential reduction and no timing fields: byte-identical output.
    #[arg(long)]
    pub deterministic: bool,
    /// Worker threads for the parallel engine.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct Common {
    pub scenario: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one CSV per level table into this directory.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub flags: CommonFlags,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Path(_) => "path",
            Command::Surface(_) => "surface",
            Command::Stokes2(_) => "stokes2",
            Command::Stokes3(_) => "stokes3",
            Command::Wz(_) => "wz",
            Command::Gauge(_) => "gauge",
            Command::Converge(_) => "converge",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Validate(c)
            | Command::Path(c)
            | Command::Surface(c)
            | Command::Stokes2(c)
            | Command::Stokes3(c)
            | Command::Wz(c)
            | Command::Gauge(c)
            | Command::Converge(c) => c,
        }
    }
}

/// Loads a scenario for `command`; `validate` defers fake-flatness failures
/// to the report.
pub fn load_scenario(path: &Path, command: &str) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let file = parse_file_text(&text)?;
    Scenario::resolve_with(file, command == "validate")
}

pub fn settings(s: &Scenario, c: &Common) -> Settings {
    let mut cfg = Settings::from_scenario(s);
    let det = cfg.deterministic || c.flags.deterministic;
    cfg = cfg.with_deterministic(det);
    if let Some(l) = c.flags.levels {
        cfg.levels = Some(l);
    }
    if let Some(t) = c.tol {
        cfg.tol = t;
    }
    if let Some(seed) = c.flags.seed {
        cfg.seed = seed;
    }
    cfg
}

pub fn run_command(command: &str, s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    match command {
        "validate" => verify::run_validate(s, cfg),
        "path" => verify::run_path(s, cfg),
        "surface" => verify::run_functor_suite(s, cfg),
        "stokes2" => verify::run_stokes2(s, cfg),
        "stokes3" => verify::run_stokes_suite(s, cfg),
        "wz" => verify::run_wz_suite(s, cfg),
        "gauge" => verify::run_gauge_suite(s, cfg),
        "converge" => verify::run_converge(s, cfg),
        other => Err(VerifyError::Unsupported(format!("unknown command {other}"))),
    }
}

fn is_usage(e: &VerifyError) -> bool {
    matches!(e, VerifyError::Scenario(_) | VerifyError::Unsupported(_))
}

fn write_outputs(report: &Report, c: &Common) -> std::io::Result<()> {
    let json = report.to_json();
    match &c.out {
        Some(p) => std::fs::write(p, &json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    if let Some(dir) = &c.csv {
        std::fs::create_dir_all(dir)?;
        for t in &report.tables {
            std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
    }
    Ok(())
}

fn execute(cmd: &Command, err: &mut dyn Write) -> i32 {
    let name = cmd.name();
    let c = cmd.common();
    let s = match load_scenario(&c.scenario, name) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", c.scenario.display());
            return EXIT_USAGE;
        }
    };
    let cfg = settings(&s, c);
    let report = match run_command(name, &s, &cfg) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return if is_usage(&e) { EXIT_USAGE } else { EXIT_FAIL };
        }
    };
    if let Err(e) = write_outputs(&report, c) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    for r in report.records.iter().filter(|r| !r.pass) {
        let _ = writeln!(err, "FAIL {}: residual {:e}, threshold {:e}", r.identity, r.residual, r.threshold);
    }
    if report.pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let jobs = cli.command.common().flags.jobs;
    let run = || execute(&cli.command, &mut std::io::stderr());
    match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["holonomy", "path", "s.json", "--levels", "3", "--deterministic", "--jobs", "2"])
            .unwrap();
        let c = cli.command.common();
        assert_eq!(cli.command.name(), "path");
        assert_eq!(c.flags.levels, Some(3));
        assert!(c.flags.deterministic);
        assert_eq!(c.flags.jobs, Some(2));
    }
}
