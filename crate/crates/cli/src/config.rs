//! Experiment configuration: one TOML document with nested sections,
//! dotted-path `--set` overrides, and a canonical content digest.
//!
//! The digest hashes a canonicalised rendering (keys sorted recursively),
//! so reordering sections or keys in the file does not change it, while
//! any value change does.

use crate::{CliError, CliResult};
use harnack_core::harnack::TestFunction;
use harnack_core::paths::SubordinatorSpec;
use harnack_core::rho::RhoModulus;
use harnack_core::sde::DriftSpec;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every trial derives a substream from it. Required, so
    /// no run ever seeds from the wall clock.
    pub seed: u64,
    /// State dimension.
    pub d: usize,
    pub drift: DriftSection,
    pub clock: ClockSection,
    #[serde(default)]
    pub mc: McSection,
    pub points: Option<PointsSection>,
    pub coupling: Option<CouplingSection>,
    pub harnack: Option<HarnackSection>,
    pub moments: Option<MomentsSection>,
    pub levy: Option<LevySection>,
    pub rho_table: Option<RhoTableSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    /// Drift descriptor: `zero`, `ou:<lambda>`, `osgood`, `rot-decay[:<omega>]`.
    pub kind: String,
    /// Continuity-modulus descriptor: `linear:<c0>`, `osgood`, `table:<path>`.
    pub rho: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    /// Per-coordinate law descriptors (`stable:<alpha>`, `gamma:<shape>,<rate>`,
    /// `cp:<rate>,<jump_mean>,<drift>`, `drift:<theta>`); a single entry is
    /// broadcast to all coordinates.
    pub laws: Vec<String>,
    pub t_horizon: f64,
    /// Grid steps for sampled clocks and the Euler solver.
    pub n_steps: usize,
    /// Clock regularisation index `n`; `0` leaves sampled clocks as they are.
    #[serde(default)]
    pub regularization: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_mc: default_n_mc() }
    }
}

fn default_n_mc() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub x: Vec<f64>,
    /// Second point for the two-point inequalities; commands that look at a
    /// single point (like `gradient`) only read `x`.
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    /// Fraction of the horizon's clock mass spent by the forced drift.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Terminal l1 distance below which a path counts as coupled.
    #[serde(default = "default_meet_distance")]
    pub meet_distance: f64,
    /// Verdict threshold on the coupled fraction.
    #[serde(default = "default_min_success_rate")]
    pub min_success_rate: f64,
    /// Override for the simulator's internal meeting tolerance.
    pub tol_meet: Option<f64>,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            meet_distance: default_meet_distance(),
            min_success_rate: default_min_success_rate(),
            tol_meet: None,
        }
    }
}

fn default_epsilon() -> f64 {
    0.9
}

fn default_meet_distance() -> f64 {
    1e-6
}

fn default_min_success_rate() -> f64 {
    0.99
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackSection {
    /// Test-function descriptor (`constant:`, `gauss:`, `plateau:`, `sigmoid:`).
    pub f: String,
    /// Exponent for the power inequalities; must exceed one when present.
    pub p: Option<f64>,
    /// Any of `conditional-log`, `conditional-power`, `log`, `power`.
    pub checks: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    /// Winsorisation cap on `1/S` samples; off by default, and acceptance
    /// runs keep it off so the estimator stays unbiased.
    pub truncate_at: Option<f64>,
    /// Horizons to tabulate; empty means just `[clock].t_horizon`.
    #[serde(default)]
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    /// Frequency vectors for the characteristic-function table; empty means
    /// the axis unit vectors plus the all-ones vector.
    #[serde(default)]
    pub z: Vec<Vec<f64>>,
    /// How many full paths to export as CSV.
    #[serde(default = "default_export_paths")]
    pub n_export_paths: usize,
}

fn default_export_paths() -> usize {
    1
}

impl Default for LevySection {
    fn default() -> Self {
        Self { z: Vec::new(), n_export_paths: default_export_paths() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoTableSection {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
}

impl ExperimentConfig {
    /// Builds the drift from its descriptors.
    pub fn drift_spec(&self) -> CliResult<DriftSpec> {
        let rho = RhoModulus::parse(&self.drift.rho)
            .map_err(|e| CliError::Config(format!("[drift].rho: {e}")))?;
        DriftSpec::parse(&self.drift.kind, self.d, rho)
            .map_err(|e| CliError::Config(format!("[drift].kind: {e}")))
    }

    /// Builds the subordinator, broadcasting a single law over coordinates.
    pub fn subordinator(&self) -> CliResult<SubordinatorSpec> {
        let descriptors: Vec<&str> = if self.clock.laws.len() == 1 {
            vec![self.clock.laws[0].as_str(); self.d]
        } else {
            self.clock.laws.iter().map(String::as_str).collect()
        };
        let laws = descriptors
            .iter()
            .map(|s| SubordinatorSpec::parse_law(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("[clock].laws: {e}")))?;
        SubordinatorSpec::new(laws).map_err(|e| CliError::Config(format!("[clock].laws: {e}")))
    }

    pub fn points_required(&self) -> CliResult<&PointsSection> {
        self.points
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [points] section for this command".into()))
    }

    /// Both points, for the two-point commands.
    pub fn point_pair(&self) -> CliResult<(&[f64], &[f64])> {
        let points = self.points_required()?;
        let y = points
            .y
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [points].y for this command".into()))?;
        Ok((&points.x, y))
    }

    pub fn harnack_required(&self) -> CliResult<&HarnackSection> {
        self.harnack
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [harnack] section for this command".into()))
    }

    pub fn test_function(&self) -> CliResult<TestFunction> {
        let section = self.harnack_required()?;
        TestFunction::parse(&section.f)
            .map_err(|e| CliError::Config(format!("[harnack].f: {e}")))
    }

    /// Cross-field checks that serde cannot express.
    fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.d == 0 {
            return fail("d: dimension must be at least 1".into());
        }
        if !(self.clock.t_horizon > 0.0 && self.clock.t_horizon.is_finite()) {
            return fail(format!(
                "[clock].t_horizon: must be positive and finite, got {}",
                self.clock.t_horizon
            ));
        }
        if self.clock.n_steps < 2 {
            return fail(format!("[clock].n_steps: need at least 2, got {}", self.clock.n_steps));
        }
        if self.clock.laws.is_empty() {
            return fail("[clock].laws: need at least one law descriptor".into());
        }
        if self.clock.laws.len() != 1 && self.clock.laws.len() != self.d {
            return fail(format!(
                "[clock].laws: got {} entries for dimension {}; give 1 or d",
                self.clock.laws.len(),
                self.d
            ));
        }
        if self.mc.n_mc < 2 {
            return fail(format!("[mc].n_mc: need at least 2 trials, got {}", self.mc.n_mc));
        }
        if let Some(points) = &self.points {
            let mut named: Vec<(&str, &Vec<f64>)> = vec![("x", &points.x)];
            if let Some(y) = &points.y {
                named.push(("y", y));
            }
            for (name, v) in named {
                if v.len() != self.d {
                    return fail(format!(
                        "[points].{name}: length {} does not match d = {}",
                        v.len(),
                        self.d
                    ));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return fail(format!("[points].{name}: coordinates must be finite"));
                }
            }
        }
        if let Some(c) = &self.coupling {
            if !(c.epsilon > 0.0 && c.epsilon < 1.0) {
                return fail(format!("[coupling].epsilon: must lie in (0, 1), got {}", c.epsilon));
            }
            if !(c.meet_distance >= 0.0) {
                return fail(format!(
                    "[coupling].meet_distance: must be >= 0, got {}",
                    c.meet_distance
                ));
            }
            if !(0.0..=1.0).contains(&c.min_success_rate) {
                return fail(format!(
                    "[coupling].min_success_rate: must lie in [0, 1], got {}",
                    c.min_success_rate
                ));
            }
        }
        if let Some(h) = &self.harnack {
            if let Some(p) = h.p {
                if !(p > 1.0 && p.is_finite()) {
                    return fail(format!("[harnack].p: must exceed 1, got {p}"));
                }
            }
            for check in &h.checks {
                let known =
                    ["conditional-log", "conditional-power", "log", "power"].contains(&check.as_str());
                if !known {
                    return fail(format!(
                        "[harnack].checks: unknown check {check:?}; expected conditional-log, \
                         conditional-power, log, or power"
                    ));
                }
            }
        }
        if let Some(m) = &self.moments {
            if let Some(cap) = m.truncate_at {
                if !(cap > 0.0 && cap.is_finite()) {
                    return fail(format!("[moments].truncate_at: must be positive, got {cap}"));
                }
            }
            if m.t.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return fail("[moments].t: horizons must be finite and > 0".into());
            }
        }
        if let Some(l) = &self.levy {
            for (i, z) in l.z.iter().enumerate() {
                if z.len() != self.d {
                    return fail(format!(
                        "[levy].z[{i}]: length {} does not match d = {}",
                        z.len(),
                        self.d
                    ));
                }
            }
            if l.n_export_paths == 0 {
                return fail("[levy].n_export_paths: must be at least 1".into());
            }
        }
        if let Some(rt) = &self.rho_table {
            if rt.t.is_empty() || rt.r.is_empty() {
                return fail("[rho_table]: t and r must be non-empty".into());
            }
            if rt.t.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return fail("[rho_table].t: entries must be finite and >= 0".into());
            }
            if rt.r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return fail("[rho_table].r: entries must be finite and > 0".into());
            }
        }
        // Descriptor strings fail at load time, not midway through a run.
        self.drift_spec()?;
        self.subordinator()?;
        if self.harnack.is_some() {
            self.test_function()?;
        }
        Ok(())
    }
}

/// Parses the file into a raw TOML document.
pub fn load_document(path: &Path) -> CliResult<toml::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str::<toml::Value>(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Applies `key.path=value` overrides in order. Values parse as TOML
/// scalars or arrays and fall back to strings, so `--set drift.kind=ou:0.5`
/// works without quoting.
pub fn apply_overrides(doc: &mut toml::Value, overrides: &[String]) -> CliResult<()> {
    for raw in overrides {
        let (path, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {raw:?}: expected key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Config(format!("--set {raw:?}: empty key segment")));
        }
        let parsed = parse_override_value(value.trim());
        let mut node = doc
            .as_table_mut()
            .ok_or_else(|| CliError::Config("config root must be a table".into()))?;
        for key in &keys[..keys.len() - 1] {
            let entry = node
                .entry((*key).to_string())
                .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
            node = entry.as_table_mut().ok_or_else(|| {
                CliError::Config(format!("--set {raw:?}: {key} is not a section"))
            })?;
        }
        node.insert(keys[keys.len() - 1].to_string(), parsed);
    }
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    // Reuse the TOML grammar for scalars/arrays; anything it rejects
    // (like bare `ou:0.5`) is taken as a string.
    if let Ok(toml::Value::Table(t)) = toml::from_str::<toml::Value>(&format!("v = {raw}")) {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// Canonical SHA-256 digest of the document: keys sorted recursively, so
/// the digest is independent of section and key order in the file.
#[must_use]
pub fn digest(doc: &toml::Value) -> String {
    let mut canonical = String::new();
    canonicalize(doc, &mut canonical);
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let bytes = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in bytes {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

fn canonicalize(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(table) => {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{key:?}:");
                canonicalize(&table[key.as_str()], out);
            }
            out.push('}');
        }
        toml::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonicalize(item, out);
            }
            out.push(']');
        }
        toml::Value::String(s) => {
            let _ = write!(out, "{s:?}");
        }
        toml::Value::Integer(v) => {
            let _ = write!(out, "{v}");
        }
        toml::Value::Float(v) => {
            let _ = write!(out, "f{v}");
        }
        toml::Value::Boolean(v) => {
            let _ = write!(out, "{v}");
        }
        toml::Value::Datetime(v) => {
            let _ = write!(out, "{v}");
        }
    }
}

/// Deserialises and cross-validates a (possibly overridden) document.
pub fn from_document(doc: &toml::Value) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = doc
        .clone()
        .try_into()
        .map_err(|e| CliError::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads, overrides, digests, and validates in one step.
pub fn load(path: &Path, overrides: &[String]) -> CliResult<(ExperimentConfig, String)> {
    let mut doc = load_document(path)?;
    apply_overrides(&mut doc, overrides)?;
    let hash = digest(&doc);
    let cfg = from_document(&doc)?;
    Ok((cfg, hash))
}
