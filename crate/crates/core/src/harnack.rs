//! Monte Carlo verification of Harnack-type inequalities.
//!
//! For the semigroup `P_T f(x) = E f(X_T^x)` of the subordinated SDE, four
//! inequality checks are provided, each comparing an estimated left side
//! against an estimated right side with propagated standard errors:
//!
//! * conditional log-Harnack, along a fixed realised clock `l`:
//!   `E [log f(X_T^y) | l] <= log E [f(X_T^x) | l]
//!    + Gamma_rho(d T, ||x - y||_1)^2 / 2 * sum_j l_j(T)^{-1}`;
//! * log-Harnack: the same with the clock averaged out, the penalty sum
//!   becoming `sum_j E S_j(T)^{-1}`;
//! * conditional power-Harnack, exponent `p > 1`:
//!   `(P_T^l f(y))^p <= P_T^l f^p(x)
//!    * exp(p / (2 (p - 1)) * Gamma^2 * sum_j l_j(T)^{-1})`;
//! * power-Harnack: Hoelder in the clock turns the penalty into the
//!   exponential moment `(E exp(p Gamma^2 / (2 (p-1)^2) * sum_j S_j(T)^{-1}))^{p-1}`,
//!   which is finite only for clocks whose inverse has exponential moments.
//!
//! A fifth check bounds the gradient:
//! `|grad P_T f(x)|^2 <= [P_T f^2 - (P_T f)^2](x)
//!  * (1 + K d T e^{K d T})^2 * d^2 T^2 * sum_j E S_j(T)^{-1}`
//! with `K` the drift's Lipschitz constant; the left side is estimated by
//! central finite differences under common random numbers.
//!
//! Power comparisons are reported on the log scale so that slack and errors
//! stay commensurate across scenarios.

use crate::error::{Error, Result};
use crate::paths::{
    inverse_moment, inverse_moment_analytic, sample_subordinator, sample_terminal,
    BrownianStore, ClockPath, CoordinateLaw, SubordinatorSpec,
};
use crate::rho::gamma_rho;
use crate::rng::{child_seed, substream};
use crate::sde::{solve_conditional_terminal, solve_unconditional, DriftSpec};
use crate::stats::{dist_l1, norm_l1, MeanSe};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bounded observables the inequalities are tested against.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `floor + exp(-||x - center||^2 / (2 width^2))`; strictly positive
    /// when `floor > 0`, which the log inequalities require.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        floor: f64,
    },
    /// `sigmoid(sharpness (radius^2 - ||x - center||^2))`: close to one on
    /// the ball, close to zero outside, infimum zero.
    Plateau {
        center: Vec<f64>,
        radius: f64,
        sharpness: f64,
    },
    /// `sigmoid(sharpness (<normal, x> - offset))`: a smoothed half-space
    /// indicator.
    SmoothIndicator {
        normal: Vec<f64>,
        offset: f64,
        sharpness: f64,
    },
    /// Constant `value > 0`; turns every inequality into a pure penalty
    /// check and is handy for exercising the plumbing.
    Constant { value: f64 },
}

impl TestFunction {
    pub fn gaussian_bump(center: Vec<f64>, width: f64, floor: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spec("bump center must be finite and non-empty".into()));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Spec(format!("bump width must be positive, got {width}")));
        }
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::Spec(format!("bump floor must be >= 0, got {floor}")));
        }
        Ok(Self::GaussianBump { center, width, floor })
    }

    pub fn plateau(center: Vec<f64>, radius: f64, sharpness: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spec("plateau center must be finite and non-empty".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Spec(format!("plateau radius must be positive, got {radius}")));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(Error::Spec(format!(
                "plateau sharpness must be positive, got {sharpness}"
            )));
        }
        Ok(Self::Plateau { center, radius, sharpness })
    }

    pub fn smooth_indicator(normal: Vec<f64>, offset: f64, sharpness: f64) -> Result<Self> {
        if normal.is_empty() || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spec("indicator normal must be finite and non-empty".into()));
        }
        if normal.iter().all(|v| *v == 0.0) {
            return Err(Error::Spec("indicator normal must be non-zero".into()));
        }
        if !offset.is_finite() {
            return Err(Error::Spec(format!("indicator offset must be finite, got {offset}")));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(Error::Spec(format!(
                "indicator sharpness must be positive, got {sharpness}"
            )));
        }
        Ok(Self::SmoothIndicator { normal, offset, sharpness })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Spec(format!("constant value must be positive, got {value}")));
        }
        Ok(Self::Constant { value })
    }

    /// Dimension the function is defined on; `None` for constants.
    #[must_use]
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::GaussianBump { center, .. } | Self::Plateau { center, .. } => Some(center.len()),
            Self::SmoothIndicator { normal, .. } => Some(normal.len()),
            Self::Constant { .. } => None,
        }
    }

    /// Infimum and supremum over all of space.
    #[must_use]
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::GaussianBump { floor, .. } => (*floor, floor + 1.0),
            Self::Plateau { .. } | Self::SmoothIndicator { .. } => (0.0, 1.0),
            Self::Constant { value } => (*value, *value),
        }
    }

    /// Whether the function is bounded away from zero, as the log
    /// inequalities require.
    #[must_use]
    pub fn strictly_positive(&self) -> bool {
        self.bounds().0 > 0.0
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(d) = self.dim() {
            assert_eq!(x.len(), d, "test function evaluated at wrong dimension");
        }
        match self {
            Self::GaussianBump { center, width, floor } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                floor + (-r2 / (2.0 * width * width)).exp()
            }
            Self::Plateau { center, radius, sharpness } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                sigmoid(sharpness * (radius * radius - r2))
            }
            Self::SmoothIndicator { normal, offset, sharpness } => {
                let a: f64 = x.iter().zip(normal).map(|(v, n)| v * n).sum();
                sigmoid(sharpness * (a - offset))
            }
            Self::Constant { value } => *value,
        }
    }

    /// Parses a descriptor:
    /// `constant:<v>`, `gauss:<width>:<floor>:<c_1,...,c_d>`,
    /// `plateau:<radius>:<sharpness>:<c_1,...,c_d>`,
    /// `sigmoid:<sharpness>:<offset>:<n_1,...,n_d>`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| {
                Error::Spec(format!("bad number {s:?} in test-function descriptor {descriptor:?}"))
            })
        };
        let vector = |s: &str| -> Result<Vec<f64>> {
            s.split(',').map(|p| num(p)).collect()
        };
        if let Some(arg) = descriptor.strip_prefix("constant:") {
            return Self::constant(num(arg)?);
        }
        let three = |arg: &str| -> Result<(f64, f64, Vec<f64>)> {
            let parts: Vec<&str> = arg.splitn(3, ':').collect();
            if parts.len() != 3 {
                return Err(Error::Spec(format!(
                    "test-function descriptor {descriptor:?} needs two scalars and a vector"
                )));
            }
            Ok((num(parts[0])?, num(parts[1])?, vector(parts[2])?))
        };
        if let Some(arg) = descriptor.strip_prefix("gauss:") {
            let (width, floor, center) = three(arg)?;
            return Self::gaussian_bump(center, width, floor);
        }
        if let Some(arg) = descriptor.strip_prefix("plateau:") {
            let (radius, sharpness, center) = three(arg)?;
            return Self::plateau(center, radius, sharpness);
        }
        if let Some(arg) = descriptor.strip_prefix("sigmoid:") {
            let (sharpness, offset, normal) = three(arg)?;
            return Self::smooth_indicator(normal, offset, sharpness);
        }
        Err(Error::Spec(format!(
            "unknown test-function descriptor {descriptor:?}; expected constant:, gauss:, \
             plateau:, or sigmoid:"
        )))
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        };
        match self {
            Self::GaussianBump { center, width, floor } => {
                write!(out, "gauss:{width}:{floor}:{}", join(center))
            }
            Self::Plateau { center, radius, sharpness } => {
                write!(out, "plateau:{radius}:{sharpness}:{}", join(center))
            }
            Self::SmoothIndicator { normal, offset, sharpness } => {
                write!(out, "sigmoid:{sharpness}:{offset}:{}", join(normal))
            }
            Self::Constant { value } => write!(out, "constant:{value}"),
        }
    }
}

/// One verified inequality instance.
#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    /// `conditional-log`, `log`, `conditional-power`, `power`, or `gradient`.
    pub inequality: String,
    /// Scale the two sides live on: `log` or `natural`.
    pub scale: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// `rhs - lhs`.
    pub slack: f64,
    /// Three combined standard errors; the verdict allows this much noise.
    pub tolerance: f64,
    pub holds: bool,
    pub n_mc: usize,
    pub seed: u64,
    pub scenario: ScenarioDesc,
    pub notes: Vec<String>,
}

/// Human-readable scenario coordinates embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioDesc {
    pub drift: String,
    pub rho: String,
    /// Per-coordinate clock descriptors; empty for fixed-clock runs.
    pub clocks: Vec<String>,
    pub d: usize,
    pub t_horizon: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Option<f64>,
    pub f: String,
}

fn finish_report(
    inequality: &str,
    scale: &str,
    lhs: MeanSe,
    rhs: MeanSe,
    n_mc: usize,
    seed: u64,
    scenario: ScenarioDesc,
    notes: Vec<String>,
) -> HarnackReport {
    let tolerance = 3.0 * (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
    HarnackReport {
        inequality: inequality.into(),
        scale: scale.into(),
        lhs: lhs.mean,
        lhs_se: lhs.se,
        rhs: rhs.mean,
        rhs_se: rhs.se,
        slack: rhs.mean - lhs.mean,
        tolerance,
        holds: lhs.mean <= rhs.mean + tolerance,
        n_mc,
        seed,
        scenario,
        notes,
    }
}

fn scenario_desc(
    b: &DriftSpec,
    clocks: Vec<String>,
    t_horizon: f64,
    x: &[f64],
    y: &[f64],
    p: Option<f64>,
    f: &TestFunction,
) -> ScenarioDesc {
    ScenarioDesc {
        drift: b.kind().to_string(),
        rho: b.rho().to_string(),
        clocks,
        d: b.dim(),
        t_horizon,
        x: x.to_vec(),
        y: y.to_vec(),
        p,
        f: f.to_string(),
    }
}

fn check_points(b: &DriftSpec, x: &[f64], y: &[f64], f: &TestFunction) -> Result<()> {
    if x.len() != b.dim() || y.len() != b.dim() {
        return Err(Error::Spec(format!(
            "points of dimension {} and {} against drift dimension {}",
            x.len(),
            y.len(),
            b.dim()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Spec("evaluation points must be finite".into()));
    }
    if let Some(fd) = f.dim() {
        if fd != b.dim() {
            return Err(Error::Spec(format!(
                "test function dimension {fd} against drift dimension {}",
                b.dim()
            )));
        }
    }
    Ok(())
}

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < 2 {
        return Err(Error::Domain("Monte Carlo batches need at least two trials".into()));
    }
    Ok(())
}

/// Terminal-value batch along a fixed clock: independent noise per trial,
/// deterministic per trial index.
fn conditional_batch<G>(
    b: &DriftSpec,
    start: &[f64],
    ell: &ClockPath,
    n_mc: usize,
    seed: u64,
    g: G,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut store = BrownianStore::new(b.dim(), substream(seed, i as u64));
            let xt = solve_conditional_terminal(b, start, ell, &mut store)?;
            Ok(g(&xt))
        })
        .collect()
}

/// Terminal-value batch with a fresh clock per trial.
fn unconditional_batch<G>(
    b: &DriftSpec,
    start: &[f64],
    spec: &SubordinatorSpec,
    t_horizon: f64,
    n_steps: usize,
    n_mc: usize,
    seed: u64,
    g: G,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let xt = solve_unconditional(b, start, spec, t_horizon, n_steps, &mut rng)?;
            Ok(g(&xt))
        })
        .collect()
}

/// Sum of `1 / l_j(T)` over coordinates of a realised clock.
fn conditional_penalty_sum(ell: &ClockPath) -> Result<f64> {
    let last = ell.grid().len() - 1;
    let mut sum = 0.0;
    for j in 0..ell.dim() {
        let v = ell.value_at_index(j, last);
        if !(v > 0.0) {
            return Err(Error::DegenerateClock(format!(
                "clock coordinate {j} has no mass at the horizon"
            )));
        }
        sum += 1.0 / v;
    }
    Ok(sum)
}

/// Sum of `E S_j(T)^{-1}` with closed forms where available and Monte Carlo
/// otherwise; returns the sum and its standard error.
fn unconditional_penalty_sum(
    spec: &SubordinatorSpec,
    t_horizon: f64,
    n_mc: usize,
    seed: u64,
    notes: &mut Vec<String>,
) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut var = 0.0;
    for j in 0..spec.dim() {
        match inverse_moment_analytic(spec.law(j), t_horizon)? {
            Some(v) if v.is_finite() => sum += v,
            Some(_) => {
                notes.push(format!(
                    "E S_{}(T)^-1 is infinite for law {}; the bound is vacuous",
                    j + 1,
                    spec.law(j)
                ));
                sum = f64::INFINITY;
            }
            None => {
                let est = inverse_moment(spec, j, t_horizon, n_mc, seed)?;
                notes.push(format!(
                    "E S_{}(T)^-1 estimated by Monte Carlo: {:.6} +- {:.2e}",
                    j + 1,
                    est.mean,
                    est.se
                ));
                sum += est.mean;
                var += est.se * est.se;
            }
        }
    }
    Ok((sum, var.sqrt()))
}

/// Conditional log-Harnack check along a fixed realised clock.
pub fn conditional_log_harnack(
    b: &DriftSpec,
    ell: &ClockPath,
    x: &[f64],
    y: &[f64],
    f: &TestFunction,
    n_mc: usize,
    seed: u64,
) -> Result<HarnackReport> {
    check_points(b, x, y, f)?;
    check_mc(n_mc)?;
    if ell.dim() != b.dim() {
        return Err(Error::Spec(format!(
            "clock dimension {} against drift dimension {}",
            ell.dim(),
            b.dim()
        )));
    }
    if !f.strictly_positive() {
        return Err(Error::Precondition(format!(
            "log-Harnack needs f bounded away from zero; {f} has infimum {}",
            f.bounds().0
        )));
    }
    let t_horizon = ell.horizon();
    let gamma = gamma_rho(b.rho(), b.dim() as f64 * t_horizon, dist_l1(x, y))?;
    let penalty = 0.5 * gamma * gamma * conditional_penalty_sum(ell)?;

    let lhs_vals = conditional_batch(b, y, ell, n_mc, child_seed(seed, "lhs"), |xt| {
        f.eval(xt).ln()
    })?;
    let rhs_vals = conditional_batch(b, x, ell, n_mc, child_seed(seed, "rhs"), |xt| f.eval(xt))?;
    let lhs = MeanSe::from_samples(&lhs_vals);
    let mut rhs = MeanSe::from_samples(&rhs_vals).log();
    rhs.mean += penalty;

    let notes = vec![format!("gamma budget {gamma:.6}, penalty {penalty:.6}")];
    let scenario = scenario_desc(b, Vec::new(), t_horizon, x, y, None, f);
    Ok(finish_report("conditional-log", "log", lhs, rhs, n_mc, seed, scenario, notes))
}

/// Conditional power-Harnack check along a fixed realised clock, reported on
/// the log scale: `p log P_T^l f(y) <= log P_T^l f^p(x) + penalty`.
pub fn conditional_power_harnack(
    b: &DriftSpec,
    ell: &ClockPath,
    x: &[f64],
    y: &[f64],
    p: f64,
    f: &TestFunction,
    n_mc: usize,
    seed: u64,
) -> Result<HarnackReport> {
    check_points(b, x, y, f)?;
    check_mc(n_mc)?;
    if ell.dim() != b.dim() {
        return Err(Error::Spec(format!(
            "clock dimension {} against drift dimension {}",
            ell.dim(),
            b.dim()
        )));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("power-Harnack needs p > 1, got {p}")));
    }
    let t_horizon = ell.horizon();
    let gamma = gamma_rho(b.rho(), b.dim() as f64 * t_horizon, dist_l1(x, y))?;
    let penalty = p / (2.0 * (p - 1.0)) * gamma * gamma * conditional_penalty_sum(ell)?;

    let lhs_vals = conditional_batch(b, y, ell, n_mc, child_seed(seed, "lhs"), |xt| f.eval(xt))?;
    let rhs_vals = conditional_batch(b, x, ell, n_mc, child_seed(seed, "rhs"), |xt| {
        f.eval(xt).powf(p)
    })?;
    let lhs_mean = MeanSe::from_samples(&lhs_vals);
    if !(lhs_mean.mean > 0.0) {
        return Err(Error::Numerical(
            "semigroup average of f vanished; power comparison has no log scale".into(),
        ));
    }
    let mut lhs = lhs_mean.log();
    lhs.mean *= p;
    lhs.se *= p;
    let mut rhs = MeanSe::from_samples(&rhs_vals).log();
    rhs.mean += penalty;

    let notes = vec![format!("gamma budget {gamma:.6}, penalty {penalty:.6}")];
    let scenario = scenario_desc(b, Vec::new(), t_horizon, x, y, Some(p), f);
    Ok(finish_report("conditional-power", "log", lhs, rhs, n_mc, seed, scenario, notes))
}

/// Log-Harnack check with the clock averaged out.
pub fn log_harnack(
    b: &DriftSpec,
    spec: &SubordinatorSpec,
    t_horizon: f64,
    x: &[f64],
    y: &[f64],
    f: &TestFunction,
    n_mc: usize,
    n_steps: usize,
    seed: u64,
) -> Result<HarnackReport> {
    check_points(b, x, y, f)?;
    check_mc(n_mc)?;
    if !f.strictly_positive() {
        return Err(Error::Precondition(format!(
            "log-Harnack needs f bounded away from zero; {f} has infimum {}",
            f.bounds().0
        )));
    }
    let gamma = gamma_rho(b.rho(), b.dim() as f64 * t_horizon, dist_l1(x, y))?;
    let mut notes = Vec::new();
    let (penalty_sum, penalty_se) =
        unconditional_penalty_sum(spec, t_horizon, n_mc, child_seed(seed, "penalty"), &mut notes)?;
    let penalty = 0.5 * gamma * gamma * penalty_sum;

    let lhs_vals = unconditional_batch(
        b,
        y,
        spec,
        t_horizon,
        n_steps,
        n_mc,
        child_seed(seed, "lhs"),
        |xt| f.eval(xt).ln(),
    )?;
    let rhs_vals = unconditional_batch(
        b,
        x,
        spec,
        t_horizon,
        n_steps,
        n_mc,
        child_seed(seed, "rhs"),
        |xt| f.eval(xt),
    )?;
    let lhs = MeanSe::from_samples(&lhs_vals);
    let mut rhs = MeanSe::from_samples(&rhs_vals).log();
    rhs.mean += penalty;
    rhs.se = (rhs.se * rhs.se + (0.5 * gamma * gamma * penalty_se).powi(2)).sqrt();

    notes.push(format!("gamma budget {gamma:.6}, penalty {penalty:.6}"));
    let clocks = spec.laws().iter().map(ToString::to_string).collect();
    let scenario = scenario_desc(b, clocks, t_horizon, x, y, None, f);
    Ok(finish_report("log", "log", lhs, rhs, n_mc, seed, scenario, notes))
}

/// Power-Harnack check with the clock averaged out, reported on the log
/// scale. The exponential penalty factor is finite only when every clock
/// coordinate has exponential inverse moments, so stable indices at or
/// below one and gamma clocks are rejected (unless the points coincide and
/// the factor degenerates to one).
pub fn power_harnack(
    b: &DriftSpec,
    spec: &SubordinatorSpec,
    t_horizon: f64,
    x: &[f64],
    y: &[f64],
    p: f64,
    f: &TestFunction,
    n_mc: usize,
    n_steps: usize,
    seed: u64,
) -> Result<HarnackReport> {
    check_points(b, x, y, f)?;
    check_mc(n_mc)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("power-Harnack needs p > 1, got {p}")));
    }
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t_horizon}")));
    }
    let gamma = gamma_rho(b.rho(), b.dim() as f64 * t_horizon, dist_l1(x, y))?;
    let lambda = p * gamma * gamma / (2.0 * (p - 1.0) * (p - 1.0));
    if lambda > 0.0 {
        for j in 0..spec.dim() {
            match spec.law(j) {
                CoordinateLaw::Stable { alpha } if alpha <= 1.0 => {
                    return Err(Error::Domain(format!(
                        "power-Harnack penalty is infinite for stable index {alpha} <= 1"
                    )));
                }
                CoordinateLaw::Gamma { .. } => {
                    return Err(Error::Domain(
                        "power-Harnack penalty is infinite for gamma clocks".into(),
                    ));
                }
                _ => {}
            }
        }
    }

    // Joint exponential factor E exp(lambda sum_j 1 / S_j(T)).
    let factor_seed = child_seed(seed, "factor");
    let factor_vals: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(factor_seed, i as u64);
            let s = sample_terminal(spec, t_horizon, &mut rng)?;
            let mut inv_sum = 0.0;
            for (j, sj) in s.iter().enumerate() {
                if !(*sj > 0.0) {
                    return Err(Error::DegenerateClock(format!(
                        "clock sample {sj} in coordinate {j} is not strictly positive"
                    )));
                }
                inv_sum += 1.0 / sj;
            }
            Ok((lambda * inv_sum).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    let factor = MeanSe::from_samples(&factor_vals);

    // Share of the estimate carried by the top decile; a majority share
    // means the tail dominates and the estimate is unstable.
    let mut sorted = factor_vals;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = (sorted.len() / 10).max(1);
    let top: f64 = sorted[..k].iter().sum();
    let total: f64 = top + sorted[k..].iter().sum::<f64>();
    let share = top / total;
    let mut notes = vec![format!(
        "exponential factor {:.6} +- {:.2e}, top-decile share {share:.3}",
        factor.mean, factor.se
    )];
    if share > 0.5 {
        notes.push(
            "heavy-tail instability: the top decile carries most of the exponential factor"
                .into(),
        );
    }

    let lhs_vals = unconditional_batch(
        b,
        y,
        spec,
        t_horizon,
        n_steps,
        n_mc,
        child_seed(seed, "lhs"),
        |xt| f.eval(xt),
    )?;
    let rhs_vals = unconditional_batch(
        b,
        x,
        spec,
        t_horizon,
        n_steps,
        n_mc,
        child_seed(seed, "rhs"),
        |xt| f.eval(xt).powf(p),
    )?;
    let lhs_mean = MeanSe::from_samples(&lhs_vals);
    if !(lhs_mean.mean > 0.0) {
        return Err(Error::Numerical(
            "semigroup average of f vanished; power comparison has no log scale".into(),
        ));
    }
    let mut lhs = lhs_mean.log();
    lhs.mean *= p;
    lhs.se *= p;
    let mut rhs = MeanSe::from_samples(&rhs_vals).log();
    rhs.mean += (p - 1.0) * factor.mean.ln();
    rhs.se = (rhs.se * rhs.se + ((p - 1.0) * factor.se / factor.mean).powi(2)).sqrt();

    notes.push(format!("gamma budget {gamma:.6}, exponent lambda {lambda:.6}"));
    let clocks = spec.laws().iter().map(ToString::to_string).collect();
    let scenario = scenario_desc(b, clocks, t_horizon, x, y, Some(p), f);
    Ok(finish_report("power", "log", lhs, rhs, n_mc, seed, scenario, notes))
}

/// Gradient estimate check at a point: squared max-coordinate derivative of
/// `P_T f` against the variance bound. Central finite differences share the
/// clock and the noise within each trial (common random numbers), with a
/// half-step consistency probe.
pub fn gradient_estimate_check(
    b: &DriftSpec,
    spec: &SubordinatorSpec,
    t_horizon: f64,
    x: &[f64],
    f: &TestFunction,
    n_mc: usize,
    n_steps: usize,
    seed: u64,
) -> Result<HarnackReport> {
    check_points(b, x, x, f)?;
    check_mc(n_mc)?;
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t_horizon}")));
    }
    let lip = b.lipschitz().ok_or_else(|| {
        Error::Precondition(
            "gradient estimate needs a drift with a declared Lipschitz constant".into(),
        )
    })?;
    let d = b.dim();
    let h = 1e-3 * (1.0 + norm_l1(x));

    let clock_seed = child_seed(seed, "fd-clock");
    let noise_seed = child_seed(seed, "fd-noise");
    // Per trial: one clock, one store, 4d solves (both signs, h and h/2);
    // shared noise cancels everything but the flow derivative.
    let fd: Vec<(Vec<f64>, Vec<f64>)> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut clock_rng = substream(clock_seed, i as u64);
            let ell = sample_subordinator(spec, t_horizon, n_steps, &mut clock_rng)?;
            let mut store = BrownianStore::new(d, substream(noise_seed, i as u64));
            let at = |start: &[f64], store: &mut BrownianStore| -> Result<f64> {
                let xt = solve_conditional_terminal(b, start, &ell, store)?;
                Ok(f.eval(&xt))
            };
            let mut full = Vec::with_capacity(d);
            let mut half = Vec::with_capacity(d);
            for j in 0..d {
                let mut shifted = x.to_vec();
                let mut diff_at = |step: f64, store: &mut BrownianStore| -> Result<f64> {
                    shifted[j] = x[j] + step;
                    let up = at(&shifted, store)?;
                    shifted[j] = x[j] - step;
                    let down = at(&shifted, store)?;
                    shifted[j] = x[j];
                    Ok((up - down) / (2.0 * step))
                };
                full.push(diff_at(h, &mut store)?);
                half.push(diff_at(0.5 * h, &mut store)?);
            }
            Ok((full, half))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = MeanSe { mean: 0.0, se: 0.0, n: n_mc };
    let mut max_disc = 0.0f64;
    for j in 0..d {
        let full_j: Vec<f64> = fd.iter().map(|(full, _)| full[j]).collect();
        let half_j: Vec<f64> = fd.iter().map(|(_, half)| half[j]).collect();
        let mf = MeanSe::from_samples(&full_j);
        let mh = MeanSe::from_samples(&half_j);
        max_disc = max_disc.max((mf.mean - mh.mean).abs());
        if mh.mean.abs() > best.mean.abs() {
            best = mh;
        }
    }
    // Squared derivative with its delta-method error.
    let lhs = MeanSe {
        mean: best.mean * best.mean,
        se: 2.0 * best.mean.abs() * best.se,
        n: n_mc,
    };

    let var_vals = unconditional_batch(
        b,
        x,
        spec,
        t_horizon,
        n_steps,
        n_mc,
        child_seed(seed, "var"),
        |xt| f.eval(xt),
    )?;
    let m1 = MeanSe::from_samples(&var_vals);
    let sq: Vec<f64> = var_vals.iter().map(|v| v * v).collect();
    let m2 = MeanSe::from_samples(&sq);
    let var_hat = (m2.mean - m1.mean * m1.mean).max(0.0);
    let var_se = (m2.se * m2.se + (2.0 * m1.mean * m1.se).powi(2)).sqrt();

    let mut notes = Vec::new();
    let (penalty_sum, penalty_se) =
        unconditional_penalty_sum(spec, t_horizon, n_mc, child_seed(seed, "penalty"), &mut notes)?;
    let kdt = lip * d as f64 * t_horizon;
    let amplification = (1.0 + kdt * kdt.exp()).powi(2) * (d as f64 * t_horizon).powi(2);
    let rhs = MeanSe {
        mean: var_hat * amplification * penalty_sum,
        se: amplification
            * ((var_se * penalty_sum).powi(2) + (var_hat * penalty_se).powi(2)).sqrt(),
        n: n_mc,
    };

    notes.push(format!(
        "fd step {h:.2e}, half-step discrepancy {max_disc:.2e}, variance {var_hat:.6}"
    ));
    let clocks = spec.laws().iter().map(ToString::to_string).collect();
    let scenario = scenario_desc(b, clocks, t_horizon, x, x, None, f);
    Ok(finish_report("gradient", "natural", lhs, rhs, n_mc, seed, scenario, notes))
}

/// Outcome of the finite-state entropy inequality self-test.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Young-type entropy inequality on a finite state space: for a probability
/// vector `w`, a density `g1 >= 0` with `sum w g1 = 1`, and any `g2`,
///
/// ```text
/// sum w g1 g2 <= log sum w exp(g2) + sum w g1 log g1.
/// ```
///
/// This is the elementary inequality behind trading an expectation under a
/// weighted measure for a log-exponential plus relative entropy; the check
/// evaluates both sides exactly.
pub fn entropy_inequality_selftest(w: &[f64], g1: &[f64], g2: &[f64]) -> Result<EntropyCheck> {
    if w.is_empty() || w.len() != g1.len() || w.len() != g2.len() {
        return Err(Error::Precondition(
            "entropy check needs equal-length non-empty inputs".into(),
        ));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("weights must be non-negative and finite".into()));
    }
    let wsum: f64 = w.iter().sum();
    if (wsum - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("weights must sum to one, got {wsum}")));
    }
    if g1.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("g1 must be non-negative and finite".into()));
    }
    if g2.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("g2 must be finite".into()));
    }
    let mass: f64 = w.iter().zip(g1).map(|(a, b)| a * b).sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "g1 must integrate to one under the weights, got {mass}"
        )));
    }
    let lhs: f64 = w.iter().zip(g1).zip(g2).map(|((a, b), c)| a * b * c).sum();
    let log_exp: f64 = w
        .iter()
        .zip(g2)
        .map(|(a, c)| a * c.exp())
        .sum::<f64>()
        .ln();
    let entropy: f64 = w
        .iter()
        .zip(g1)
        .map(|(a, b)| if *b == 0.0 { 0.0 } else { a * b * b.ln() })
        .sum();
    let rhs = log_exp + entropy;
    Ok(EntropyCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
        holds: lhs <= rhs + 1e-12 * (1.0 + rhs.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::ClockInterpolation;
    use crate::rho::RhoModulus;
    use crate::sde::DriftKind;

    fn drift_clock_spec(d: usize, theta: f64) -> SubordinatorSpec {
        SubordinatorSpec::homogeneous(
            CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: theta },
            d,
        )
        .unwrap()
    }

    fn zero_drift(d: usize) -> DriftSpec {
        DriftSpec::new(d, DriftKind::Zero, RhoModulus::linear(1.0).unwrap(), Some(0.0)).unwrap()
    }

    fn identity_clock(d: usize, t_max: f64, n: usize) -> ClockPath {
        let grid: Vec<f64> = (0..=n).map(|i| t_max * i as f64 / n as f64).collect();
        let values = vec![grid.clone(); d];
        ClockPath::new(grid, values, ClockInterpolation::Linear).unwrap()
    }

    #[test]
    fn test_functions_evaluate_and_bound() {
        let g = TestFunction::gaussian_bump(vec![0.0, 0.0], 1.0, 0.5).unwrap();
        assert!((g.eval(&[0.0, 0.0]) - 1.5).abs() < 1e-15);
        assert!(g.strictly_positive());
        assert_eq!(g.bounds(), (0.5, 1.5));

        let p = TestFunction::plateau(vec![0.0], 1.0, 8.0).unwrap();
        assert!(p.eval(&[0.0]) > 0.99);
        assert!(p.eval(&[3.0]) < 0.01);
        assert!(!p.strictly_positive());

        let s = TestFunction::smooth_indicator(vec![1.0, 0.0], 0.0, 5.0).unwrap();
        assert!(s.eval(&[2.0, 0.0]) > 0.99);
        assert!((s.eval(&[0.0, 7.0]) - 0.5).abs() < 1e-15);
        // Extreme arguments must not overflow.
        assert_eq!(s.eval(&[1e6, 0.0]), 1.0);
        assert!(s.eval(&[-1e6, 0.0]) >= 0.0);

        let c = TestFunction::constant(0.7).unwrap();
        assert_eq!(c.eval(&[1.0, 2.0, 3.0]), 0.7);
        assert_eq!(c.dim(), None);
    }

    #[test]
    fn test_function_descriptors_round_trip() {
        for desc in [
            "constant:0.5",
            "gauss:1:0.25:0.5,-0.5",
            "plateau:1.5:4:0,0",
            "sigmoid:5:0.2:1,-1",
        ] {
            let f = TestFunction::parse(desc).unwrap();
            let again = TestFunction::parse(&f.to_string()).unwrap();
            assert_eq!(f, again, "{desc}");
        }
        assert!(TestFunction::parse("gauss:0:0:0").is_err());
        assert!(TestFunction::parse("constant:-1").is_err());
        assert!(TestFunction::parse("nope:1").is_err());
    }

    #[test]
    fn entropy_selftest_is_exact_at_equality() {
        // Equality holds when g2 = log g1.
        let w = [0.5, 0.5];
        let g1 = [1.2, 0.8];
        let g2 = [1.2f64.ln(), 0.8f64.ln()];
        let check = entropy_inequality_selftest(&w, &g1, &g2).unwrap();
        assert!(check.holds);
        assert!(check.slack.abs() < 1e-12, "slack {}", check.slack);
    }

    #[test]
    fn entropy_selftest_holds_on_random_draws() {
        let mut rng = substream(99, 0);
        use rand::RngExt;
        for _ in 0..200 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
            let wsum: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / wsum).collect();
            let g1_raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let mass: f64 = w.iter().zip(&g1_raw).map(|(a, b)| a * b).sum();
            let g1: Vec<f64> = g1_raw.iter().map(|v| v / mass).collect();
            let g2: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let check = entropy_inequality_selftest(&w, &g1, &g2).unwrap();
            assert!(check.holds, "violated with slack {}", check.slack);
        }
    }

    #[test]
    fn entropy_selftest_rejects_bad_inputs() {
        assert!(entropy_inequality_selftest(&[0.6, 0.6], &[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(entropy_inequality_selftest(&[0.5, 0.5], &[2.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(entropy_inequality_selftest(&[0.5, 0.5], &[-1.0, 3.0], &[0.0, 0.0]).is_err());
        assert!(entropy_inequality_selftest(&[0.5], &[1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_function_reduces_to_pure_penalty() {
        let b = zero_drift(1);
        let ell = identity_clock(1, 1.0, 40);
        let f = TestFunction::constant(0.7).unwrap();
        let report =
            conditional_log_harnack(&b, &ell, &[0.3], &[0.0], &f, 64, 5).unwrap();
        assert!(report.holds);
        // Averaging identical samples reassociates the sum, so allow an ulp
        // of drift in the mean and a correspondingly tiny standard error.
        assert!((report.lhs - 0.7f64.ln()).abs() < 1e-14);
        assert!(report.lhs_se < 1e-12);
        assert!(report.rhs_se < 1e-12);
        // Slack is exactly the penalty: Gamma(1, 0.3)^2 / 2 with l(T) = 1.
        let gamma = 0.3 * (std::f64::consts::E + 1.0);
        assert!((report.slack - 0.5 * gamma * gamma).abs() < 1e-12);
    }

    #[test]
    fn conditional_power_with_constant_is_pure_penalty() {
        let b = zero_drift(1);
        let ell = identity_clock(1, 1.0, 40);
        let f = TestFunction::constant(2.0).unwrap();
        let report =
            conditional_power_harnack(&b, &ell, &[0.2], &[0.0], 2.0, &f, 64, 5).unwrap();
        assert!(report.holds);
        let gamma = 0.2 * (std::f64::consts::E + 1.0);
        assert!((report.slack - gamma * gamma).abs() < 1e-12, "slack {}", report.slack);
    }

    #[test]
    fn log_harnack_runs_on_drift_clock() {
        let b = zero_drift(1);
        let spec = drift_clock_spec(1, 1.0);
        let f = TestFunction::gaussian_bump(vec![0.0], 1.0, 0.3).unwrap();
        let report =
            log_harnack(&b, &spec, 1.0, &[0.2], &[0.0], &f, 500, 50, 17).unwrap();
        assert!(report.holds, "slack {} tolerance {}", report.slack, report.tolerance);
        assert_eq!(report.inequality, "log");
        assert!(report.slack > 0.0);
    }

    #[test]
    fn power_harnack_gates_divergent_clocks() {
        let b = zero_drift(1);
        let f = TestFunction::plateau(vec![0.0], 1.0, 4.0).unwrap();
        let gamma_spec =
            SubordinatorSpec::homogeneous(CoordinateLaw::Gamma { shape: 2.0, rate: 1.0 }, 1)
                .unwrap();
        assert!(matches!(
            power_harnack(&b, &gamma_spec, 1.0, &[0.1], &[0.0], 2.0, &f, 100, 20, 1),
            Err(Error::Domain(_))
        ));
        let low_stable =
            SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 0.9 }, 1).unwrap();
        assert!(matches!(
            power_harnack(&b, &low_stable, 1.0, &[0.1], &[0.0], 2.0, &f, 100, 20, 1),
            Err(Error::Domain(_))
        ));
        // Coincident points defuse the exponential factor entirely.
        let report =
            power_harnack(&b, &gamma_spec, 1.0, &[0.1], &[0.1], 2.0, &f, 200, 20, 1).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn log_harnack_requires_positive_f() {
        let b = zero_drift(1);
        let spec = drift_clock_spec(1, 1.0);
        let f = TestFunction::plateau(vec![0.0], 1.0, 4.0).unwrap();
        assert!(matches!(
            log_harnack(&b, &spec, 1.0, &[0.1], &[0.0], &f, 100, 20, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gradient_check_holds_for_gaussian_observable() {
        let b = zero_drift(1);
        let spec = drift_clock_spec(1, 1.0);
        let f = TestFunction::gaussian_bump(vec![0.0], 1.0, 0.0).unwrap();
        let report =
            gradient_estimate_check(&b, &spec, 1.0, &[0.3], &f, 600, 50, 23).unwrap();
        assert!(report.holds, "lhs {} rhs {}", report.lhs, report.rhs);
        // Both sides are genuinely non-trivial here.
        assert!(report.lhs > 1e-4);
        assert!(report.rhs > report.lhs);
        assert_eq!(report.scale, "natural");
    }

    #[test]
    fn gradient_check_needs_lipschitz_claim() {
        let b = DriftSpec::new(1, DriftKind::Osgood, RhoModulus::osgood(), None).unwrap();
        let spec = drift_clock_spec(1, 1.0);
        let f = TestFunction::gaussian_bump(vec![0.0], 1.0, 0.1).unwrap();
        assert!(matches!(
            gradient_estimate_check(&b, &spec, 1.0, &[0.1], &f, 100, 20, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let b = zero_drift(1);
        let spec = drift_clock_spec(1, 1.0);
        let f = TestFunction::gaussian_bump(vec![0.0], 1.0, 0.2).unwrap();
        let run = || log_harnack(&b, &spec, 1.0, &[0.2], &[0.0], &f, 200, 20, 31).unwrap();
        let a = serde_json::to_string(&run()).unwrap();
        let c = serde_json::to_string(&run()).unwrap();
        assert_eq!(a, c);
    }
}
