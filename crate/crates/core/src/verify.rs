//! Scenario runners: each identity becomes a record with a measured
//! residual, a threshold and a verdict.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::chains::{self, subdivide_kite, Chain3, Kite, Simplex, Surface};
use crate::crossed::{validate, ValidationReport};
use crate::forms::{
    curvature, gauge_transform, gauge_variation_check, FakeFlatReport, FormError, GaugeMap, LieValuedForm,
    TwoConnection,
};
use crate::lie::{frobenius_norm, group_dist, GroupElement, GroupKind, LieError};
use crate::mi::{element_coords, integrate_2form, integrate_3form, Engine, MIResult, MiError};
use crate::scenario::{default_sample_points, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Chain(#[from] chains::ChainError),
    #[error(transparent)]
    Crossed(#[from] crate::crossed::CrossedError),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Record {
    pub identity: String,
    pub anchor: String,
    pub residual: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Record {
    pub fn at_most(identity: &str, anchor: &str, residual: f64, threshold: f64) -> Self {
        Record {
            identity: identity.into(),
            anchor: anchor.into(),
            residual,
            threshold,
            relation: Relation::AtMost,
            pass: residual <= threshold,
        }
    }

    pub fn at_least(identity: &str, anchor: &str, residual: f64, threshold: f64) -> Self {
        Record {
            identity: identity.into(),
            anchor: anchor.into(),
            residual,
            threshold,
            relation: Relation::AtLeast,
            pass: residual >= threshold,
        }
    }

    /// Strict inequality `residual > threshold`.
    pub fn exceeds(identity: &str, anchor: &str, residual: f64, threshold: f64) -> Self {
        Record { pass: residual > threshold, ..Record::at_least(identity, anchor, residual, threshold) }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelRow {
    pub k: u32,
    pub value: Vec<f64>,
    pub diff: Option<f64>,
    /// `log2` of the previous diff over this one.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelTable {
    pub name: String,
    pub rows: Vec<LevelRow>,
}

impl LevelTable {
    pub fn from_mi(name: &str, r: &MIResult) -> Self {
        Self::from_values(name, r.per_level.iter().map(|(k, g)| (*k, element_coords(g))).collect(), Some(&r.diffs))
    }

    /// Rows of `(k, value)`; `diffs[i]` belongs to row `i + 1`. Without
    /// explicit diffs, the first value coordinate plays the role of the diff.
    pub fn from_values(name: &str, values: Vec<(u32, Vec<f64>)>, diffs: Option<&[f64]>) -> Self {
        let diff_of = |i: usize| -> Option<f64> {
            match diffs {
                Some(d) => i.checked_sub(1).and_then(|j| d.get(j).copied()),
                None => values[i].1.first().copied(),
            }
        };
        let rows = (0..values.len())
            .map(|i| {
                let diff = diff_of(i);
                let prev = i.checked_sub(1).and_then(diff_of);
                let observed_order = match (prev, diff) {
                    (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
                    _ => None,
                };
                LevelRow { k: values[i].0, value: values[i].1.clone(), diff, observed_order }
            })
            .collect();
        LevelTable { name: name.into(), rows }
    }

    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.value.len()).max().unwrap_or(0);
        let mut out = String::from("k");
        for i in 0..width {
            out.push_str(&format!(",value_{i}"));
        }
        out.push_str(",diff,observed_order\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&r.k.to_string());
            for i in 0..width {
                out.push(',');
                if let Some(v) = r.value.get(i) {
                    out.push_str(&format!("{v:e}"));
                }
            }
            out.push_str(&format!(",{},{}\n", opt(r.diff), opt(r.observed_order)));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub command: String,
    pub crossed_module: String,
    pub seed: u64,
    pub records: Vec<Record>,
    pub tables: Vec<LevelTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fake_flat: Option<FakeFlatReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub pass: bool,
}

impl Report {
    fn new(s: &Scenario, command: &str, cfg: &Settings) -> Self {
        Report {
            scenario: s.name().into(),
            command: command.into(),
            crossed_module: s.cm.name().into(),
            seed: cfg.seed,
            records: vec![],
            tables: vec![],
            fake_flat: s.connection.as_ref().map(|c| c.fake_flat_report.clone()),
            validation: None,
            wall_clock_seconds: None,
            pass: true,
        }
    }

    fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    fn finish(mut self, cfg: &Settings, start: Instant) -> Self {
        self.pass = self.records.iter().all(|r| r.pass) && self.validation.as_ref().is_none_or(|v| v.pass);
        if !cfg.deterministic {
            self.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        }
        self
    }

    pub fn record(&self, identity: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.identity == identity)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Effective run settings: scenario values overridden by command-line flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub levels: Option<u32>,
    pub tol: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub threshold: Option<f64>,
    pub engine: Engine,
}

impl Settings {
    pub fn from_scenario(s: &Scenario) -> Self {
        let r = &s.file.run;
        let deterministic = r.deterministic;
        Settings {
            levels: r.levels,
            tol: r.tol.unwrap_or(crate::mi::DEFAULT_TOL),
            seed: r.seed.unwrap_or(0),
            deterministic,
            threshold: r.threshold,
            engine: if deterministic { Engine::deterministic() } else { Engine::parallel() },
        }
    }

    pub fn with_deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self.engine = if on { Engine::deterministic() } else { Engine::parallel() };
        self
    }

    fn threshold_or(&self, default: f64) -> f64 {
        self.threshold.unwrap_or(default)
    }
}

fn dist(a: &GroupElement, b: &GroupElement) -> Result<f64, VerifyError> {
    Ok(group_dist(a, b)?)
}

fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement, VerifyError> {
    Ok(a.compose(b)?)
}

/// `validate`: crossed-module axioms plus fake-flatness of the connection.
pub fn run_validate(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "validate", cfg);
    let n = s.file.run.samples.unwrap_or(1000);
    let tol = cfg.threshold_or(1e-10);
    let v = validate(&s.cm, n, tol, cfg.seed)?;
    for a in &v.axioms {
        report.push(Record::at_most(&format!("crossed-module axiom: {}", a.axiom), &a.anchor, a.max_residual, tol));
    }
    if let Some(c) = &s.connection {
        let ff = &c.fake_flat_report;
        if !ff.opted_out {
            report.push(Record::at_most(
                "fake flatness F_alpha + dphi(beta) = 0",
                "2-connection constraint",
                ff.max_residual,
                crate::forms::FAKE_FLAT_TOLERANCE,
            ));
        }
    }
    report.validation = Some(v);
    Ok(report.finish(cfg, start))
}

/// `path`: path holonomy with composition and inversion checks.
pub fn run_path(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "path", cfg);
    let alpha = s.path_form()?;
    let path = s.path()?;
    let k_max = cfg.levels.unwrap_or(crate::mi::DEFAULT_PATH_LEVELS);
    let e = cfg.engine;
    let whole = e.mi_path_chain(alpha, &path, cfg.tol, k_max)?;
    report.tables.push(LevelTable::from_mi("path", &whole));
    report.push(Record::at_most(
        "path Riemann products converge",
        "path multiplicative integral as limit of Riemann products",
        whole.diffs.last().copied().unwrap_or(f64::INFINITY),
        cfg.tol,
    ));
    if let Some(expected) = &s.file.run.expected {
        let spec = alpha.spec();
        let target = GroupElement::new(spec.clone(), spec.exp_mat(&spec.from_coords(expected))?)?;
        report.push(Record::at_most(
            "path holonomy equals the closed-form value",
            "abelian reduction to the exponential of the line integral",
            dist(&whole.value, &target)?,
            cfg.threshold_or(1e-10),
        ));
    }
    path_functor_records(&mut report, alpha, &path, cfg, k_max)?;
    Ok(report.finish(cfg, start))
}

fn path_functor_records(
    report: &mut Report,
    alpha: &LieValuedForm,
    path: &[Simplex],
    cfg: &Settings,
    k_max: u32,
) -> Result<(), VerifyError> {
    let e = cfg.engine;
    let pieces: Vec<Simplex> = if path.len() == 1 { chains::subdivide_path(&path[0], 1) } else { path.to_vec() };
    let whole = e.mi_path_chain(alpha, &pieces, cfg.tol, k_max)?;
    let mut product = GroupElement::identity(alpha.spec().clone());
    for p in &pieces {
        product = compose(&product, &e.mi_path(alpha, p, cfg.tol, k_max)?.value)?;
    }
    report.push(Record::at_most(
        "path composition MI(a * b) = MI(a) MI(b)",
        "transport functor: composition of paths",
        dist(&whole.value, &product)?,
        2.0 * cfg.tol,
    ));
    let reversed = chains::reverse_path(&pieces);
    let inv = e.mi_path_chain(alpha, &reversed, cfg.tol, k_max)?;
    report.push(Record::at_most(
        "path inversion MI(a^-1) = MI(a)^-1",
        "transport functor: inverse paths",
        dist(&inv.value, &whole.value.inverse())?,
        2.0 * cfg.tol,
    ));
    Ok(())
}

/// Kite with the face traversed the other way round.
fn reversed_kite(k: &Kite) -> Kite {
    Kite { tail: k.tail.clone(), face: k.face.with_orientation(-1).normalized() }
}

/// Same face map restricted to a degenerate (collinear) domain triangle.
fn degenerate_kite(k: &Kite) -> Result<Kite, VerifyError> {
    let v = k.face.vertices();
    let d = k.face.map().domain_dim();
    let mid: Vec<f64> = (0..d).map(|i| 0.5 * (v[0][i] + v[1][i])).collect();
    let face = Simplex::new(k.face.map().clone(), vec![v[0][..d].to_vec(), v[1][..d].to_vec(), mid], 1)?;
    Ok(Kite::new(k.tail.clone(), face)?)
}

/// `surface`: the transport 2-functor checks on a kite.
pub fn run_functor_suite(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "surface", cfg);
    let conn = s.connection()?;
    let kite = s.kite()?;
    let e = cfg.engine;
    let k = cfg.levels.unwrap_or(5);
    let thr = cfg.threshold_or(1e-3);
    let h = conn.cm.h();

    let mi = e.mi_surface(conn, &kite, cfg.tol, k)?;
    report.tables.push(LevelTable::from_mi("surface", &mi));

    if s.file.run.path.is_some() {
        path_functor_records(&mut report, &conn.alpha, &s.path()?, cfg, crate::mi::DEFAULT_PATH_LEVELS)?;
    }

    let whole = e.rp_surface(conn, &kite, k)?;
    let children = Surface::new(subdivide_kite(&kite));
    let parts = e.rp_surface_multi(conn, &children, k.saturating_sub(1))?;
    report.push(Record::at_most(
        "surface composition MI(kite) = ordered product over sub-kites",
        "transport 2-functor: composition of kites",
        dist(&whole, &parts)?,
        thr,
    ));

    let rev = e.rp_surface(conn, &reversed_kite(&kite), k)?;
    report.push(Record::at_most(
        "surface inversion MI(reversed kite) = MI(kite)^-1",
        "transport 2-functor: orientation reversal",
        dist(&rev, &whole.inverse())?,
        thr,
    ));

    report.push(Record::at_most(
        "boundary compatibility Phi(MI(kite)) = MI(lasso)^-1",
        "compatibility with the boundary map",
        e.boundary_residual(conn, &kite, k)?,
        thr,
    ));

    let degenerate = degenerate_kite(&kite)?;
    let mut worst: f64 = 0.0;
    let id = GroupElement::identity(h.clone());
    for level in 0..=k {
        worst = worst.max(dist(&e.rp_surface(conn, &degenerate, level)?, &id)?);
    }
    report.push(Record::at_most(
        "degenerate surface has trivial holonomy",
        "thin-homotopy invariance",
        worst,
        1e-12,
    ));
    Ok(report.finish(cfg, start))
}

/// `stokes2`: decay of the boundary-compatibility residual over levels.
pub fn run_stokes2(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "stokes2", cfg);
    let conn = s.connection()?;
    let kite = s.kite()?;
    let top = cfg.levels.unwrap_or(6);
    let residuals: Vec<f64> =
        (0..=top).map(|k| cfg.engine.boundary_residual(conn, &kite, k)).collect::<Result<_, _>>()?;
    report.tables.push(LevelTable::from_values(
        "boundary_residual",
        residuals.iter().enumerate().map(|(k, r)| (k as u32, vec![*r])).collect(),
        None,
    ));
    let ratios: Vec<f64> = (3.min(top as usize)..=top as usize)
        .filter(|&k| k >= 1)
        .map(|k| residuals[k] / residuals[k - 1])
        .collect();
    let worst = ratios.iter().copied().fold(f64::NAN, f64::max);
    report.push(Record::at_most(
        "boundary residual decays geometrically (worst ratio for k >= 3)",
        "compatibility with the boundary map",
        if ratios.is_empty() { f64::NAN } else { worst },
        0.6,
    ));
    report.push(Record::at_most(
        "boundary residual at the finest level",
        "compatibility with the boundary map",
        *residuals.last().expect("levels"),
        cfg.threshold_or(1e-4),
    ));
    Ok(report.finish(cfg, start))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SlopeStudy {
    pub diameters: Vec<f64>,
    pub defects: Vec<f64>,
    pub flux_norms: Vec<f64>,
    pub defect_slope: f64,
    pub flux_slope: f64,
}

/// Shrinks an affine tetrahedron about its centroid by `2^-j`,
/// `j = 1..=5`, and compares the boundary product with `exp_H(int H)`.
pub fn tet_slope_study(conn: &TwoConnection, tet: &Simplex, k: u32, e: &Engine) -> Result<SlopeStudy, VerifyError> {
    let hform = conn.three_curvature()?;
    let h = conn.cm.h();
    let pts: Vec<Vec<f64>> = (0..4).map(|i| tet.vertex_point(i)).collect();
    let centroid: Vec<f64> = (0..pts[0].len()).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / 4.0).collect();
    let mut st = SlopeStudy { diameters: vec![], defects: vec![], flux_norms: vec![], defect_slope: 0.0, flux_slope: 0.0 };
    for j in 1..=5 {
        let scale = 0.5f64.powi(j);
        let small: Vec<Vec<f64>> =
            pts.iter().map(|p| p.iter().zip(&centroid).map(|(x, o)| o + scale * (x - o)).collect()).collect();
        let f = Simplex::affine(&small)?;
        let product = e.tet_boundary_product(conn, &f, k)?;
        let vol = integrate_3form(&hform, &Chain3::new(vec![(f.clone(), 1)])?.refined(1))?;
        let flux = GroupElement::new(h.clone(), h.exp_mat(vol.matrix())?)?;
        st.diameters.push(f.diameter());
        st.defects.push(dist(&product, &flux)?);
        st.flux_norms.push(vol.norm());
    }
    st.defect_slope = loglog_slope(&st.diameters, &st.defects);
    st.flux_slope = loglog_slope(&st.diameters, &st.flux_norms);
    Ok(st)
}

/// `stokes3`: local tetrahedron study, global defect per level, flat case,
/// analytic phase and filling independence.
pub fn run_stokes_suite(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "stokes3", cfg);
    let conn = s.connection()?;
    let e = cfg.engine;
    let top = cfg.levels.unwrap_or(3);
    let thr = cfg.threshold_or(1e-3);
    let hform = conn.three_curvature()?;
    let flat = hform.is_symbolically_zero();

    if s.file.run.tet.is_some() {
        let st = tet_slope_study(conn, &s.tet()?, top, &e)?;
        report.tables.push(LevelTable::from_values(
            "tet_defect",
            (0..st.diameters.len()).map(|j| (j as u32 + 1, vec![st.diameters[j], st.defects[j], st.flux_norms[j]])).collect(),
            Some(&st.defects[1..]),
        ));
        let anchor = "local Stokes theorem for tetrahedra";
        report.push(Record::at_least("tet defect log-log slope", anchor, st.defect_slope, 3.8));
        report.push(Record::at_most("3-curvature flux log-log slope deviation from 3", anchor, (st.flux_slope - 3.0).abs(), 0.1));
        report.push(Record::exceeds("defect slope exceeds flux slope", anchor, st.defect_slope - st.flux_slope, 0.0));
    }

    if s.file.run.pair.is_some() {
        let (pair, origin, size) = s.pair()?;
        let levels: Vec<u32> = (1..=top.max(1)).collect();
        let d = e.stokes3_defect(conn, &pair, &levels)?;
        report.tables.push(LevelTable::from_values(
            "stokes3_defect",
            d.per_level.iter().map(|l| (l.k, vec![l.defect, l.flux_norm])).collect(),
            None,
        ));
        let anchor = "global Stokes theorem MI(S1) = MI(S0) exp(int_V H)";
        report.push(Record::at_most("global Stokes defect at the finest level", anchor, d.defect, thr));
        let defects: Vec<f64> = d.per_level.iter().map(|l| l.defect).collect();
        if defects.len() >= 2 && defects[0] > 1e-10 {
            let worst = defects.windows(2).map(|w| w[1] / w[0]).fold(f64::NAN, f64::max);
            report.push(Record::at_most("global Stokes defect decreases with level (worst ratio)", anchor, worst, 1.0 - 1e-12));
        }
        if s.file.run.flat {
            let anchor = "vanishing 3-curvature";
            report.push(Record::at_most("3-curvature vanishes identically", anchor, if flat { 0.0 } else { 1.0 }, 0.0));
            report.push(Record::at_most("flat case: surface holonomy depends only on the boundary", anchor, d.defect, 1e-6));
        }
        if let Some(expected) = &s.file.run.expected {
            let h = conn.cm.h();
            let m1 = e.rp_surface_multi(conn, &pair.sigma1, top)?;
            let m0 = e.rp_surface_multi(conn, &pair.sigma0, top)?;
            let ratio = compose(&m1, &m0.inverse())?;
            let target = GroupElement::new(h.clone(), h.exp_mat(&h.from_coords(expected))?)?;
            report.push(Record::at_most(
                "holonomy ratio MI(S1) MI(S0)^-1 matches the analytic phase",
                "abelian phase relation",
                dist(&ratio, &target)?,
                thr,
            ));
        }
        let bump = s.file.run.second_filling_bump.unwrap_or(0.2);
        let other = chains::box_surface_pair(std::sync::Arc::new(chains::bumped_box_map(origin, size, bump)))?;
        let d2 = e.stokes3_defect(conn, &other, &[top.max(1)])?;
        let v1 = integrate_3form(&hform, &pair.filling.refined(top))?;
        let v2 = integrate_3form(&hform, &other.filling.refined(top))?;
        let anchor = "filling independence for a bounding difference cycle";
        report.push(Record::at_most(
            "3-curvature integrals over two fillings agree",
            anchor,
            frobenius_norm(&(v1.matrix() - v2.matrix())),
            thr,
        ));
        report.push(Record::at_most("Stokes defects over two fillings agree", anchor, (d.defect - d2.defect).abs(), thr));
    }
    if report.records.is_empty() {
        return Err(VerifyError::Unsupported("stokes3 needs run.pair or run.tet".into()));
    }
    Ok(report.finish(cfg, start))
}

fn require_abelian(s: &Scenario) -> Result<(), VerifyError> {
    if s.cm.h().kind() != GroupKind::U1 || s.cm.g().dim() != 0 {
        return Err(VerifyError::Unsupported(format!(
            "this suite needs the abelian module (trivial G, H = U(1)); got {}",
            s.cm.name()
        )));
    }
    Ok(())
}

pub const DEFAULT_FLUXES: [f64; 5] = [2.0 * PI, 4.0 * PI, PI, 3.0, 0.0];

/// `wz`: closed-surface holonomy against `exp(i flux)` and quantisation.
pub fn run_wz_suite(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    require_abelian(s)?;
    let start = Instant::now();
    let mut report = Report::new(s, "wz", cfg);
    let conn = s.connection()?;
    let surface = s.closed()?;
    let k = cfg.levels.unwrap_or(1);
    let e = cfg.engine;
    let mut unit_flux = 0.0;
    for kite in &surface.kites {
        for leaf in chains::subdivide_kite_levels(kite, k) {
            unit_flux += integrate_2form(&conn.beta, &leaf.face)?[0];
        }
    }
    if unit_flux.abs() < 1e-9 {
        return Err(VerifyError::Unsupported("beta has zero total flux through the closed surface".into()));
    }
    let h = conn.cm.h();
    let id = GroupElement::identity(h.clone());
    let fluxes = s.file.run.fluxes.clone().unwrap_or_else(|| DEFAULT_FLUXES.to_vec());
    let mut rows = vec![];
    for (i, c) in fluxes.iter().enumerate() {
        let scaled = TwoConnection {
            beta: conn.beta.scale(c / unit_flux),
            ..conn.clone()
        };
        let g = e.closed_surface_mi(&scaled, &surface, k)?;
        let d = dist(&g, &id)?;
        let expected = GroupElement::new(h.clone(), h.exp_mat(&h.from_coords(&[*c]))?)?;
        report.push(Record::at_most(
            &format!("closed-surface holonomy equals exp(i flux), flux = {c}"),
            "abelian phase relation",
            dist(&g, &expected)?,
            1e-6,
        ));
        let quantized = ((c / (2.0 * PI)) - (c / (2.0 * PI)).round()).abs() < 1e-9;
        let identity = format!("holonomy trivial iff flux in 2 pi Z, flux = {c}");
        let anchor = "flux quantisation on closed surfaces";
        report.push(if quantized {
            Record::at_most(&identity, anchor, d, 1e-6)
        } else {
            Record::exceeds(&identity, anchor, d, 1e-6)
        });
        if (c - PI).abs() < 1e-12 {
            report.push(Record::at_most("half-quantum flux gives distance 2", anchor, (d - 2.0).abs(), 1e-6));
        }
        rows.push((i as u32, vec![*c, d]));
    }
    report.tables.push(LevelTable::from_values("flux_sweep", rows, Some(&[])));
    Ok(report.finish(cfg, start))
}

/// `gauge`: covariance of the 3-curvature under infinitesimal gauge
/// transformations, by step halving.
pub fn run_gauge_suite(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    if s.cm.g().dim() == 0 || !matches!(s.cm.g().kind(), GroupKind::Su2 | GroupKind::So3) {
        return Err(VerifyError::Unsupported(format!("the gauge suite needs a nonabelian module; got {}", s.cm.name())));
    }
    let start = Instant::now();
    let mut report = Report::new(s, "gauge", cfg);
    let conn = s.connection()?;
    let lambda = s.gauge_lambda()?;
    let gdef = s.file.run.gauge.clone().unwrap_or_default();
    let step = gdef.step.unwrap_or(1e-3);
    let points = gdef.points.unwrap_or_else(|| default_sample_points(conn.ambient_dim()));
    let cm = &conn.cm;
    let anchor = "gauge covariance of the 3-curvature";

    let zero_b = LieValuedForm::zero(cm.h().clone(), conn.ambient_dim(), 2);
    let z = gauge_variation_check(cm, &conn.alpha, &zero_b, &lambda, step, &points)?;
    report.push(Record::at_most("B = 0 gives zero variation", anchor, z.residual, 0.0));

    let g = GaugeMap { factors: lambda.iter().enumerate().map(|(i, l)| (i, l.clone())).collect() };
    let zero_a = LieValuedForm::zero(cm.g().clone(), conn.ambient_dim(), 1);
    let (pure, _) = gauge_transform(cm, &zero_a, &zero_b, &g)?;
    let f = curvature(&pure)?;
    let mut worst: f64 = 0.0;
    let n = conn.ambient_dim();
    for p in &points {
        for pair in crate::forms::multi_indices(n, 2) {
            let mut u = vec![0.0; n];
            let mut v = vec![0.0; n];
            u[pair[0]] = 1.0;
            v[pair[1]] = 1.0;
            worst = worst.max(cm.g().coords_norm(&f.eval_coords(p, &[&u, &v])?));
        }
    }
    report.push(Record::at_most("pure-gauge connection is flat", anchor, worst, 1e-8));

    let r1 = gauge_variation_check(cm, &conn.alpha, &conn.beta, &lambda, step, &points)?;
    let r2 = gauge_variation_check(cm, &conn.alpha, &conn.beta, &lambda, step / 2.0, &points)?;
    report.push(Record::at_most(
        "finite-difference variation matches -Lambda |> H (relative)",
        anchor,
        r1.residual / r1.predicted_norm,
        1e-2,
    ));
    let ratio = r1.residual / r2.residual;
    report.push(Record::at_least("step-halving ratio lower bound", anchor, ratio, 1.6));
    report.push(Record::at_most("step-halving ratio upper bound", anchor, ratio, 2.4));
    report.tables.push(LevelTable::from_values(
        "gauge_steps",
        vec![(0, vec![r1.step, r1.residual, r1.predicted_norm]), (1, vec![r2.step, r2.residual, r2.predicted_norm])],
        Some(&[r2.residual]),
    ));
    Ok(report.finish(cfg, start))
}

/// `converge`: level tables for the path and/or kite of a scenario.
pub fn run_converge(s: &Scenario, cfg: &Settings) -> Result<Report, VerifyError> {
    let start = Instant::now();
    let mut report = Report::new(s, "converge", cfg);
    let e = cfg.engine;
    let mut results = vec![];
    if s.file.run.path.is_some() {
        let k = cfg.levels.unwrap_or(crate::mi::DEFAULT_PATH_LEVELS);
        results.push(("path", e.mi_path_chain(s.path_form()?, &s.path()?, cfg.tol, k)?));
    }
    if s.file.run.kite.is_some() {
        let k = cfg.levels.unwrap_or(crate::mi::DEFAULT_SURFACE_LEVELS);
        results.push(("surface", e.mi_surface(s.connection()?, &s.kite()?, cfg.tol, k)?));
    }
    if results.is_empty() {
        return Err(VerifyError::Unsupported("converge needs run.path or run.kite".into()));
    }
    for (name, r) in results {
        report.tables.push(LevelTable::from_mi(name, &r));
        let worst = r.diffs.windows(2).map(|w| w[1] / w[0]).fold(f64::NAN, f64::max);
        if r.diffs.len() >= 2 && r.diffs[0] > 0.0 {
            report.push(Record::at_most(
                &format!("{name} level differences decrease monotonically (worst ratio)"),
                "convergence of Riemann products",
                worst,
                1.0 - 1e-12,
            ));
        }
        report.push(Record::at_least(
            &format!("{name} observed order"),
            "convergence of Riemann products",
            r.observed_order.unwrap_or(f64::INFINITY),
            0.9,
        ));
    }
    Ok(report.finish(cfg, start))
}
