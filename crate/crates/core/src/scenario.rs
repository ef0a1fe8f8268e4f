//! Scenario files: a JSON document naming a crossed module, forms, chains
//! and run settings. Unknown keys are rejected; `schema` must be 1.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::chains::{
    box_closed_surface, box_map, box_surface_pair, bumped_box_map, ChainError, Kite, Simplex, Surface, SurfacePair,
    SymbolicMap,
};
use crate::crossed::{catalog, CrossedError, CrossedModule};
use crate::expr::{parse_expr, Expr, ExprError};
use crate::forms::{fake_flat_beta, FormError, LieValuedForm, TwoConnection};
use crate::lie::{ExpMethod, GroupSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error at byte {offset}: {message}")]
    Schema { offset: usize, message: String },
    #[error("unsupported schema version {0} (expected 1)")]
    Version(u32),
    #[error("unresolved name `{name}` in {context}")]
    Unresolved { name: String, context: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Crossed(#[from] CrossedError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub crossed_module: String,
    #[serde(default)]
    pub groups: BTreeMap<String, GroupOverride>,
    pub ambient_dim: usize,
    #[serde(default)]
    pub forms: BTreeMap<String, FormDef>,
    #[serde(default)]
    pub connection: Option<ConnectionDef>,
    #[serde(default)]
    pub chains: BTreeMap<String, ChainDef>,
    #[serde(default)]
    pub run: RunDef,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ExpMethodName {
    ClosedForm,
    ScalingSquaring,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupOverride {
    pub exp_method: Option<ExpMethodName>,
    pub membership_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GroupRef {
    G,
    H,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermDef {
    pub coeff: String,
    pub basis: usize,
    pub dx: Vec<usize>,
}

/// A literal form, or (with `fake_flat_from`) the 2-form `-dphi^+ F_alpha`
/// plus the literal terms, which must be inert.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormDef {
    pub group: GroupRef,
    pub degree: usize,
    #[serde(default)]
    pub terms: Vec<TermDef>,
    #[serde(default)]
    pub fake_flat_from: Option<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConnectionDef {
    pub alpha: String,
    pub beta: String,
    #[serde(default)]
    pub opt_out_fake_flat: bool,
    #[serde(default)]
    pub sample_points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainDef {
    /// Components in `s, t, u` over the standard simplex of dimension `dim`.
    Simplex { dim: usize, map: Vec<String> },
    /// Affine simplex through ambient points.
    Affine { points: Vec<Vec<f64>> },
    /// Concatenation of named 1-simplices.
    Path { pieces: Vec<String> },
    Kite {
        #[serde(default)]
        tail: Vec<String>,
        face: String,
    },
    /// Bottom face of a box against the other five, filled by the box.
    BoxPair {
        origin: [f64; 3],
        size: [f64; 3],
        #[serde(default)]
        bump: f64,
    },
    /// All six faces of a box, outward.
    BoxClosed { origin: [f64; 3], size: [f64; 3] },
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaugeDef {
    /// Components of the infinitesimal gauge parameter, one per basis
    /// element of the algebra of `G`.
    pub lambda: Vec<String>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunDef {
    pub levels: Option<u32>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub deterministic: bool,
    pub samples: Option<usize>,
    /// Acceptance threshold for the command's main residual.
    pub threshold: Option<f64>,
    /// 1-form integrated by path commands; defaults to the connection's alpha.
    pub form: Option<String>,
    pub path: Option<String>,
    pub kite: Option<String>,
    pub pair: Option<String>,
    pub closed: Option<String>,
    pub tet: Option<String>,
    /// Expected `exp` coordinates for a path value or a Stokes phase ratio.
    pub expected: Option<Vec<f64>>,
    pub fluxes: Option<Vec<f64>>,
    pub gauge: Option<GaugeDef>,
    /// Bump amplitude of the second filling in the Stokes suite.
    pub second_filling_bump: Option<f64>,
    /// Assert the flat-case identity: vanishing 3-curvature and a Stokes
    /// defect at most 1e-6.
    #[serde(default)]
    pub flat: bool,
}

/// A resolved chain object.
#[derive(Debug, Clone)]
pub enum ChainObject {
    Simplex(Simplex),
    Path(Vec<Simplex>),
    Kite(Kite),
    Pair { pair: SurfacePair, origin: [f64; 3], size: [f64; 3] },
    Closed(Surface),
}

impl ChainObject {
    fn kind(&self) -> &'static str {
        match self {
            ChainObject::Simplex(_) => "simplex",
            ChainObject::Path(_) => "path",
            ChainObject::Kite(_) => "kite",
            ChainObject::Pair { .. } => "box_pair",
            ChainObject::Closed(_) => "box_closed",
        }
    }
}

/// A parsed and resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub cm: Arc<CrossedModule>,
    pub forms: BTreeMap<String, LieValuedForm>,
    pub connection: Option<TwoConnection>,
    pub chains: BTreeMap<String, ChainObject>,
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

pub fn parse_file_text(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Schema {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.schema != SCHEMA_VERSION {
        return Err(ScenarioError::Version(file.schema));
    }
    Ok(file)
}

pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Scenario::from_text(&text)
}

fn unresolved(name: &str, context: &str) -> ScenarioError {
    ScenarioError::Unresolved { name: name.to_string(), context: context.to_string() }
}

fn override_spec(spec: &Arc<GroupSpec>, o: Option<&GroupOverride>) -> Arc<GroupSpec> {
    let Some(o) = o else { return spec.clone() };
    let mut s = (**spec).clone();
    if let Some(m) = o.exp_method {
        s = s.with_exp_method(match m {
            ExpMethodName::ClosedForm => ExpMethod::ClosedForm,
            ExpMethodName::ScalingSquaring => ExpMethod::ScalingAndSquaring,
        });
    }
    if let Some(t) = o.membership_tolerance {
        s = s.with_membership_tolerance(t);
    }
    Arc::new(s)
}

/// Default fake-flatness sample points: a 3-per-axis grid on `[0, 1]^n`.
pub fn default_sample_points(n: usize) -> Vec<Vec<f64>> {
    let axis = [0.1, 0.5, 0.9];
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..n {
        pts = pts.into_iter().flat_map(|p| axis.iter().map(move |a| [p.clone(), vec![*a]].concat())).collect();
    }
    pts
}

impl Scenario {
    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        Self::resolve(parse_file_text(text)?)
    }

    pub fn resolve(file: ScenarioFile) -> Result<Self, ScenarioError> {
        Self::resolve_with(file, false)
    }

    /// With `defer_fake_flat`, a connection failing fake-flatness is still
    /// built; its report carries the residual for the caller to judge.
    pub fn resolve_with(file: ScenarioFile, defer_fake_flat: bool) -> Result<Self, ScenarioError> {
        for key in file.groups.keys() {
            if key != "g" && key != "h" {
                return Err(unresolved(key, "groups (expected `g` or `h`)"));
            }
        }
        if !(1..=4).contains(&file.ambient_dim) {
            return Err(ScenarioError::Invalid(format!("ambient_dim {} outside 1..=4", file.ambient_dim)));
        }
        let base = catalog(&file.crossed_module)?;
        let g = override_spec(base.g(), file.groups.get("g"));
        let h = override_spec(base.h(), file.groups.get("h"));
        let cm = Arc::new(base.with_groups(g, h)?);

        let mut forms = BTreeMap::new();
        // literal forms first, derived ones after
        let mut pending: Vec<(&String, &FormDef)> = vec![];
        for (name, def) in &file.forms {
            if def.fake_flat_from.is_some() {
                pending.push((name, def));
                continue;
            }
            forms.insert(name.clone(), literal_form(&cm, file.ambient_dim, def)?);
        }
        for (name, def) in pending {
            let src = def.fake_flat_from.as_ref().expect("derived");
            let alpha = forms.get(src).ok_or_else(|| unresolved(src, &format!("forms.{name}.fake_flat_from")))?;
            if def.group != GroupRef::H || def.degree != 2 {
                return Err(ScenarioError::Invalid(format!("forms.{name}: a fake-flat form is an h-valued 2-form")));
            }
            let inert = if def.terms.is_empty() { None } else { Some(literal_form(&cm, file.ambient_dim, def)?) };
            let beta = fake_flat_beta(&cm, alpha, inert.as_ref())?;
            forms.insert(name.clone(), beta);
        }

        let connection = match &file.connection {
            None => None,
            Some(c) => {
                let a = forms.get(&c.alpha).ok_or_else(|| unresolved(&c.alpha, "connection.alpha"))?.clone();
                let b = forms.get(&c.beta).ok_or_else(|| unresolved(&c.beta, "connection.beta"))?.clone();
                let pts = c.sample_points.clone().unwrap_or_else(|| default_sample_points(file.ambient_dim));
                let mut conn = TwoConnection::new(cm.clone(), a, b, &pts, c.opt_out_fake_flat || defer_fake_flat)?;
                conn.fake_flat_report.opted_out = c.opt_out_fake_flat;
                Some(conn)
            }
        };

        let chains = resolve_chains(&file)?;
        let s = Scenario { file, cm, forms, connection, chains };
        for (field, name) in [
            ("run.path", &s.file.run.path),
            ("run.kite", &s.file.run.kite),
            ("run.pair", &s.file.run.pair),
            ("run.closed", &s.file.run.closed),
            ("run.tet", &s.file.run.tet),
        ] {
            if let Some(n) = name {
                if !s.chains.contains_key(n) {
                    return Err(unresolved(n, field));
                }
            }
        }
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn connection(&self) -> Result<&TwoConnection, ScenarioError> {
        self.connection.as_ref().ok_or_else(|| ScenarioError::Invalid("scenario has no connection".into()))
    }

    pub fn form(&self, name: &str) -> Result<&LieValuedForm, ScenarioError> {
        self.forms.get(name).ok_or_else(|| unresolved(name, "forms"))
    }

    fn target(&self, field: &str, name: &Option<String>) -> Result<&ChainObject, ScenarioError> {
        let n = name.as_ref().ok_or_else(|| ScenarioError::Invalid(format!("{field} is required for this command")))?;
        self.chains.get(n).ok_or_else(|| unresolved(n, field))
    }

    /// The run's path target as a list of 1-simplices.
    pub fn path(&self) -> Result<Vec<Simplex>, ScenarioError> {
        match self.target("run.path", &self.file.run.path)? {
            ChainObject::Simplex(s) if s.dim() == 1 => Ok(vec![s.clone()]),
            ChainObject::Path(p) => Ok(p.clone()),
            other => Err(ScenarioError::Invalid(format!("run.path names a {}, expected a path", other.kind()))),
        }
    }

    pub fn kite(&self) -> Result<Kite, ScenarioError> {
        match self.target("run.kite", &self.file.run.kite)? {
            ChainObject::Kite(k) => Ok(k.clone()),
            ChainObject::Simplex(s) if s.dim() == 2 => Ok(Kite::bare(s.clone())?),
            other => Err(ScenarioError::Invalid(format!("run.kite names a {}, expected a kite", other.kind()))),
        }
    }

    pub fn pair(&self) -> Result<(SurfacePair, [f64; 3], [f64; 3]), ScenarioError> {
        match self.target("run.pair", &self.file.run.pair)? {
            ChainObject::Pair { pair, origin, size } => Ok((pair.clone(), *origin, *size)),
            other => Err(ScenarioError::Invalid(format!("run.pair names a {}, expected a box_pair", other.kind()))),
        }
    }

    pub fn closed(&self) -> Result<Surface, ScenarioError> {
        match self.target("run.closed", &self.file.run.closed)? {
            ChainObject::Closed(s) => Ok(s.clone()),
            other => Err(ScenarioError::Invalid(format!("run.closed names a {}, expected a box_closed", other.kind()))),
        }
    }

    pub fn tet(&self) -> Result<Simplex, ScenarioError> {
        match self.target("run.tet", &self.file.run.tet)? {
            ChainObject::Simplex(s) if s.dim() == 3 => Ok(s.clone()),
            other => Err(ScenarioError::Invalid(format!("run.tet names a {}, expected a 3-simplex", other.kind()))),
        }
    }

    /// The 1-form for path commands.
    pub fn path_form(&self) -> Result<&LieValuedForm, ScenarioError> {
        match (&self.file.run.form, &self.connection) {
            (Some(n), _) => self.form(n),
            (None, Some(c)) => Ok(&c.alpha),
            (None, None) => Err(ScenarioError::Invalid("run.form or a connection is required".into())),
        }
    }

    pub fn gauge_lambda(&self) -> Result<Vec<Expr>, ScenarioError> {
        let g = self.file.run.gauge.as_ref().ok_or_else(|| ScenarioError::Invalid("run.gauge is required".into()))?;
        Ok(g.lambda.iter().map(|s| parse_expr(s)).collect::<Result<_, _>>()?)
    }
}

fn literal_form(cm: &CrossedModule, ambient: usize, def: &FormDef) -> Result<LieValuedForm, ScenarioError> {
    let spec = match def.group {
        GroupRef::G => cm.g().clone(),
        GroupRef::H => cm.h().clone(),
    };
    let terms: Vec<(&str, usize, &[usize])> = def.terms.iter().map(|t| (t.coeff.as_str(), t.basis, t.dx.as_slice())).collect();
    Ok(LieValuedForm::parse(spec, ambient, def.degree, &terms)?)
}

fn resolve_chains(file: &ScenarioFile) -> Result<BTreeMap<String, ChainObject>, ScenarioError> {
    let mut out: BTreeMap<String, ChainObject> = BTreeMap::new();
    // simplices first so that paths and kites can refer to them
    for (name, def) in &file.chains {
        let obj = match def {
            ChainDef::Simplex { dim, map } => {
                let comps: Vec<&str> = map.iter().map(String::as_str).collect();
                ChainObject::Simplex(Simplex::standard(Arc::new(SymbolicMap::parse(*dim, &comps)?)))
            }
            ChainDef::Affine { points } => ChainObject::Simplex(Simplex::affine(points)?),
            ChainDef::BoxPair { origin, size, bump } => {
                let map = if *bump == 0.0 { box_map(*origin, *size) } else { bumped_box_map(*origin, *size, *bump) };
                ChainObject::Pair { pair: box_surface_pair(Arc::new(map))?, origin: *origin, size: *size }
            }
            ChainDef::BoxClosed { origin, size } => ChainObject::Closed(box_closed_surface(Arc::new(box_map(*origin, *size)))?),
            _ => continue,
        };
        if let ChainObject::Simplex(s) = &obj {
            if s.ambient_dim() != file.ambient_dim {
                return Err(ScenarioError::Invalid(format!(
                    "chains.{name} maps into dimension {}, scenario ambient_dim is {}",
                    s.ambient_dim(),
                    file.ambient_dim
                )));
            }
        }
        out.insert(name.clone(), obj);
    }
    let edge = |out: &BTreeMap<String, ChainObject>, n: &str, ctx: &str| -> Result<Simplex, ScenarioError> {
        match out.get(n) {
            Some(ChainObject::Simplex(s)) if s.dim() == 1 => Ok(s.clone()),
            Some(_) => Err(ScenarioError::Invalid(format!("{ctx}: `{n}` is not a 1-simplex"))),
            None => Err(unresolved(n, ctx)),
        }
    };
    for (name, def) in &file.chains {
        let obj = match def {
            ChainDef::Path { pieces } => ChainObject::Path(
                pieces.iter().map(|p| edge(&out, p, &format!("chains.{name}.pieces"))).collect::<Result<_, _>>()?,
            ),
            ChainDef::Kite { tail, face } => {
                let tail = tail.iter().map(|p| edge(&out, p, &format!("chains.{name}.tail"))).collect::<Result<_, _>>()?;
                let face = match out.get(face) {
                    Some(ChainObject::Simplex(s)) if s.dim() == 2 => s.clone(),
                    Some(_) => return Err(ScenarioError::Invalid(format!("chains.{name}.face: `{face}` is not a 2-simplex"))),
                    None => return Err(unresolved(face, &format!("chains.{name}.face"))),
                };
                ChainObject::Kite(Kite::new(tail, face)?)
            }
            _ => continue,
        };
        out.insert(name.clone(), obj);
    }
    Ok(out)
}
