//! Sticky coupling with forced drift and its Girsanov weight.
//!
//! Two copies of the SDE run on the same clock and the same Brownian store.
//! The second copy carries an extra forced drift
//! `kappa * sign(X_j - Y_j) dl_j` per unmet coordinate, with the constant
//!
//! ```text
//! kappa = Gamma_rho(d T, ||x - y||_1) / min_j l_j(eps T)
//! ```
//!
//! sized so that the forced displacement budget closes the worst-case gap
//! before time `eps T`. A coordinate meets when its difference changes sign
//! within a step or falls below the meeting tolerance; from then on it is
//! glued, following the first copy exactly. Gluing leans on the drift acting
//! coordinatewise through the difference, so the construction is used with
//! the coordinatewise drift families.
//!
//! The forced drift is paid for by the exponential weight
//! `R = exp(M - <M>/2)` with `M = -sum_j int sign(X_j - Y_j) kappa dW_{l_j}`
//! stopped at each coordinate's meeting time. `E R = 1`, and the bracket is
//! bounded by `kappa * Gamma` up to one clock step of overshoot per
//! coordinate.

use crate::error::{Error, Result};
use crate::paths::{BrownianStore, ClockInterpolation, ClockPath};
use crate::rho::{gamma_rho, RhoModulus};
use crate::sde::DriftSpec;
use crate::stats::{dist_l1, quantile, MeanSe};
use serde::Serialize;
use std::fmt::Write as _;

/// Default fraction of the horizon by which the forced drift budget must
/// have closed the gap.
pub const DEFAULT_EPSILON: f64 = 0.9;

/// Configuration of one coupled run.
#[derive(Debug, Clone)]
pub struct CouplingConfig {
    t_horizon: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    epsilon: f64,
    rho: RhoModulus,
    tol_meet: f64,
}

impl CouplingConfig {
    /// A config with the default budget fraction and a meeting tolerance of
    /// `1e-9 (1 + ||x - y||_1)`.
    pub fn new(t_horizon: f64, x: Vec<f64>, y: Vec<f64>, rho: RhoModulus) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "coupling horizon must be positive, got {t_horizon}"
            )));
        }
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Spec(format!(
                "start points need equal positive dimension, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Spec("start points must be finite".into()));
        }
        let tol_meet = 1e-9 * (1.0 + dist_l1(&x, &y));
        Ok(Self {
            t_horizon,
            x,
            y,
            epsilon: DEFAULT_EPSILON,
            rho,
            tol_meet,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "budget fraction must lie in (0, 1), got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_tol_meet(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Domain(format!("meeting tolerance must be positive, got {tol}")));
        }
        self.tol_meet = tol;
        Ok(self)
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    #[must_use]
    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    #[must_use]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[must_use]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[must_use]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[must_use]
    pub fn rho(&self) -> &RhoModulus {
        &self.rho
    }

    #[must_use]
    pub fn tol_meet(&self) -> f64 {
        self.tol_meet
    }
}

/// Forcing constant `Gamma_rho(d T, ||x - y||_1) / min_j l_j(eps T)`.
///
/// Zero when the start points coincide; errors if any clock coordinate has
/// no mass by `eps T`, because the budget would be undefined.
pub fn kappa_t(
    rho: &RhoModulus,
    t_horizon: f64,
    x: &[f64],
    y: &[f64],
    ell: &ClockPath,
    epsilon: f64,
) -> Result<f64> {
    kappa_parts(rho, t_horizon, x, y, ell, epsilon).map(|p| p.kappa)
}

struct KappaParts {
    kappa: f64,
    gamma_budget: f64,
    min_ell_eps: f64,
}

fn kappa_parts(
    rho: &RhoModulus,
    t_horizon: f64,
    x: &[f64],
    y: &[f64],
    ell: &ClockPath,
    epsilon: f64,
) -> Result<KappaParts> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "budget fraction must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t_horizon}")));
    }
    let d = x.len();
    let r = dist_l1(x, y);
    let min_ell_eps = (0..ell.dim())
        .map(|j| ell.value_at(j, epsilon * t_horizon))
        .fold(f64::INFINITY, f64::min);
    if !(min_ell_eps > 0.0) {
        return Err(Error::DegenerateClock(format!(
            "some clock coordinate carries no mass by eps T = {}; regularize the clock first",
            epsilon * t_horizon
        )));
    }
    let gamma_budget = gamma_rho(rho, d as f64 * t_horizon, r)?;
    Ok(KappaParts {
        kappa: gamma_budget / min_ell_eps,
        gamma_budget,
        min_ell_eps,
    })
}

/// A realised coupled pair with its Girsanov bookkeeping.
#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    grid: Vec<f64>,
    x_path: Vec<Vec<f64>>,
    y_path: Vec<Vec<f64>>,
    /// Meeting time per coordinate, interpolated inside the crossing step;
    /// `INFINITY` when the coordinate never met.
    tau: Vec<f64>,
    m_path: Vec<f64>,
    bracket_path: Vec<f64>,
    kappa: f64,
    gamma_budget: f64,
    min_ell_eps: f64,
    max_clock_step: f64,
    tol_meet: f64,
}

impl CoupledTrajectory {
    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    #[must_use]
    pub fn x_path(&self) -> &[Vec<f64>] {
        &self.x_path
    }

    #[must_use]
    pub fn y_path(&self) -> &[Vec<f64>] {
        &self.y_path
    }

    #[must_use]
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Meeting time of the whole vector: the largest coordinate time.
    #[must_use]
    pub fn tau_max(&self) -> f64 {
        self.tau.iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    #[must_use]
    pub fn all_met(&self) -> bool {
        self.tau.iter().all(|t| t.is_finite())
    }

    #[must_use]
    pub fn terminal_distance(&self) -> f64 {
        dist_l1(
            self.x_path.last().expect("non-empty path"),
            self.y_path.last().expect("non-empty path"),
        )
    }

    #[must_use]
    pub fn m_inf(&self) -> f64 {
        *self.m_path.last().expect("non-empty path")
    }

    #[must_use]
    pub fn bracket_inf(&self) -> f64 {
        *self.bracket_path.last().expect("non-empty path")
    }

    #[must_use]
    pub fn m_path(&self) -> &[f64] {
        &self.m_path
    }

    #[must_use]
    pub fn bracket_path(&self) -> &[f64] {
        &self.bracket_path
    }

    #[must_use]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[must_use]
    pub fn gamma_budget(&self) -> f64 {
        self.gamma_budget
    }

    #[must_use]
    pub fn min_ell_eps(&self) -> f64 {
        self.min_ell_eps
    }

    /// Largest single-step clock increment over all coordinates.
    #[must_use]
    pub fn max_clock_step(&self) -> f64 {
        self.max_clock_step
    }

    #[must_use]
    pub fn tol_meet(&self) -> f64 {
        self.tol_meet
    }

    /// CSV rendering with header `t,X_1..X_d,Y_1..Y_d,M,bracket`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        for j in 1..=d {
            let _ = write!(out, ",X_{j}");
        }
        for j in 1..=d {
            let _ = write!(out, ",Y_{j}");
        }
        out.push_str(",M,bracket\n");
        for (i, t) in self.grid.iter().enumerate() {
            let _ = write!(out, "{t}");
            for v in &self.x_path[i] {
                let _ = write!(out, ",{v}");
            }
            for v in &self.y_path[i] {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{},{}", self.m_path[i], self.bracket_path[i]);
            out.push('\n');
        }
        out
    }
}

/// Runs the coupled pair along a strictly increasing clock on shared noise.
pub fn simulate_coupled(
    b: &DriftSpec,
    cfg: &CouplingConfig,
    ell: &ClockPath,
    store: &mut BrownianStore,
) -> Result<CoupledTrajectory> {
    let d = b.dim();
    if cfg.dim() != d || ell.dim() != d || store.dim() != d {
        return Err(Error::Spec(format!(
            "dimension mismatch: drift {d}, config {}, clock {}, store {}",
            cfg.dim(),
            ell.dim(),
            store.dim()
        )));
    }
    let t_end = ell.horizon();
    if (t_end - cfg.t_horizon).abs() > 1e-9 * cfg.t_horizon.max(1.0) {
        return Err(Error::Spec(format!(
            "clock horizon {t_end} does not match configured horizon {}",
            cfg.t_horizon
        )));
    }
    if ell.interpolation() != ClockInterpolation::Linear {
        return Err(Error::Precondition(
            "coupling needs an absolutely continuous clock; regularize pure-jump clocks first"
                .into(),
        ));
    }
    for j in 0..d {
        if !ell.strictly_increasing(j) {
            return Err(Error::Precondition(format!(
                "clock coordinate {j} is not strictly increasing; regularize it before coupling"
            )));
        }
    }
    let parts = kappa_parts(cfg.rho(), cfg.t_horizon, cfg.x(), cfg.y(), ell, cfg.epsilon())?;
    let kappa = parts.kappa;
    let tol = cfg.tol_meet();
    let grid = ell.grid();
    let n = grid.len();

    let mut x_state = cfg.x().to_vec();
    let mut y_state = cfg.y().to_vec();
    let mut met = vec![false; d];
    let mut tau = vec![f64::INFINITY; d];
    for j in 0..d {
        if (x_state[j] - y_state[j]).abs() <= tol {
            met[j] = true;
            tau[j] = 0.0;
        }
    }

    let mut x_path = Vec::with_capacity(n);
    let mut y_path = Vec::with_capacity(n);
    let mut m_path = Vec::with_capacity(n);
    let mut bracket_path = Vec::with_capacity(n);
    x_path.push(x_state.clone());
    y_path.push(y_state.clone());
    m_path.push(0.0);
    bracket_path.push(0.0);

    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut m_acc = 0.0;
    let mut bracket_acc = 0.0;
    let mut max_clock_step = 0.0f64;
    let mut u_prev: Vec<f64> = (0..d).map(|j| ell.value_at_index(j, 0)).collect();
    let mut w_prev: Vec<f64> = (0..d).map(|j| store.value(j, u_prev[j])).collect();

    for i in 0..n - 1 {
        let dt = grid[i + 1] - grid[i];
        b.eval(&x_state, &mut bx);
        b.eval(&y_state, &mut by);
        for j in 0..d {
            let u_next = ell.value_at_index(j, i + 1);
            let dl = u_next - u_prev[j];
            max_clock_step = max_clock_step.max(dl);
            let w_next = store.value(j, u_next);
            let dw = w_next - w_prev[j];
            u_prev[j] = u_next;
            w_prev[j] = w_next;

            let x_new = x_state[j] + bx[j] * dt + dw;
            if met[j] {
                x_state[j] = x_new;
                y_state[j] = x_new;
                continue;
            }
            let z_old = x_state[j] - y_state[j];
            let s = z_old.signum();
            let y_new = y_state[j] + by[j] * dt + dw + kappa * s * dl;
            m_acc -= s * kappa * dw;
            bracket_acc += kappa * kappa * dl;

            x_state[j] = x_new;
            y_state[j] = y_new;
            let z_new = x_new - y_new;
            if z_new * s < 0.0 {
                // Sign flip: the forced drift overshot inside the step;
                // place tau at the linear crossing.
                met[j] = true;
                tau[j] = grid[i] + dt * z_old.abs() / (z_old.abs() + z_new.abs());
                y_state[j] = x_new;
            } else if z_new.abs() <= tol {
                met[j] = true;
                tau[j] = grid[i + 1];
                y_state[j] = x_new;
            }
            if !x_state[j].is_finite() || !y_state[j].is_finite() {
                return Err(Error::Numerical(format!(
                    "coupled state not finite at t = {} in coordinate {j}",
                    grid[i + 1]
                )));
            }
        }
        x_path.push(x_state.clone());
        y_path.push(y_state.clone());
        m_path.push(m_acc);
        bracket_path.push(bracket_acc);
    }

    Ok(CoupledTrajectory {
        grid: grid.to_vec(),
        x_path,
        y_path,
        tau,
        m_path,
        bracket_path,
        kappa,
        gamma_budget: parts.gamma_budget,
        min_ell_eps: parts.min_ell_eps,
        max_clock_step,
        tol_meet: tol,
    })
}

/// The exponential weight of one trajectory and its bracket accounting.
#[derive(Debug, Clone, Serialize)]
pub struct GirsanovWeight {
    /// `exp(M_inf - bracket / 2)`, never capped.
    pub weight: f64,
    pub m_inf: f64,
    pub bracket: f64,
    /// Budget bound `kappa * Gamma = Gamma^2 / min_j l_j(eps T)`.
    pub bracket_bound: f64,
    /// One clock step of overshoot allowance, `kappa^2 max_step`.
    pub step_allowance: f64,
}

impl GirsanovWeight {
    /// Whether the bracket respects its budget bound plus overshoot
    /// allowance and running-sum rounding.
    #[must_use]
    pub fn within_bound(&self) -> bool {
        self.bracket <= self.bracket_bound + self.step_allowance + 1e-9 * (1.0 + self.bracket_bound)
    }
}

/// Computes the Girsanov weight of a finished trajectory.
#[must_use]
pub fn girsanov_weight(traj: &CoupledTrajectory) -> GirsanovWeight {
    let m_inf = traj.m_inf();
    let bracket = traj.bracket_inf();
    GirsanovWeight {
        weight: (m_inf - 0.5 * bracket).exp(),
        m_inf,
        bracket,
        bracket_bound: traj.kappa() * traj.gamma_budget(),
        step_allowance: traj.kappa() * traj.kappa() * traj.max_clock_step(),
    }
}

/// Per-path digest carrying everything batch diagnostics need; large
/// batches keep these instead of full trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    /// Meeting time of the whole vector; infinite when some coordinate
    /// never met.
    pub tau_max: f64,
    pub all_met: bool,
    pub terminal_distance: f64,
    pub kappa: f64,
    pub gamma_budget: f64,
    pub weight: GirsanovWeight,
}

/// Condenses a trajectory into its batch digest.
#[must_use]
pub fn summarize(traj: &CoupledTrajectory) -> PathSummary {
    PathSummary {
        tau_max: if traj.all_met() { traj.tau_max() } else { f64::INFINITY },
        all_met: traj.all_met(),
        terminal_distance: traj.terminal_distance(),
        kappa: traj.kappa(),
        gamma_budget: traj.gamma_budget(),
        weight: girsanov_weight(traj),
    }
}

/// Batch summary over coupled trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingDiagnostics {
    pub n_paths: usize,
    /// Fraction with terminal l1 distance at or below `success_threshold`.
    pub success_rate: f64,
    pub success_threshold: f64,
    /// Fraction where every coordinate met before the horizon.
    pub all_met_rate: f64,
    pub mean_weight: f64,
    pub weight_se: f64,
    /// Quantiles of the vector meeting time over fully met paths.
    pub tau_p50: f64,
    pub tau_p90: f64,
    pub tau_max: f64,
    /// Largest signed excess `bracket - bound - allowance` over all paths;
    /// at or below zero means every path respected the budget.
    pub max_bracket_excess: f64,
    pub mean_kappa: f64,
    pub max_kappa: f64,
}

/// Aggregates per-path digests into batch diagnostics.
pub fn coupling_diagnostics(
    paths: &[PathSummary],
    success_threshold: f64,
) -> Result<CouplingDiagnostics> {
    if paths.is_empty() {
        return Err(Error::Domain("diagnostics need at least one trajectory".into()));
    }
    if !(success_threshold >= 0.0) {
        return Err(Error::Domain(format!(
            "success threshold must be >= 0, got {success_threshold}"
        )));
    }
    let n = paths.len();
    let mut successes = 0usize;
    let mut fully_met = 0usize;
    let mut weights = Vec::with_capacity(n);
    let mut taus = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut kappa_sum = 0.0;
    let mut kappa_max = f64::NEG_INFINITY;
    for path in paths {
        if path.terminal_distance <= success_threshold {
            successes += 1;
        }
        let w = &path.weight;
        max_excess = max_excess.max(w.bracket - w.bracket_bound - w.step_allowance);
        weights.push(w.weight);
        if path.all_met {
            fully_met += 1;
            taus.push(path.tau_max);
        }
        kappa_sum += path.kappa;
        kappa_max = kappa_max.max(path.kappa);
    }
    let weight_stats = MeanSe::from_samples(&weights);
    let (tau_p50, tau_p90, tau_max) = if taus.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        taus.sort_by(f64::total_cmp);
        (
            quantile(&taus, 0.5),
            quantile(&taus, 0.9),
            *taus.last().expect("non-empty"),
        )
    };
    Ok(CouplingDiagnostics {
        n_paths: n,
        success_rate: successes as f64 / n as f64,
        success_threshold,
        all_met_rate: fully_met as f64 / n as f64,
        mean_weight: weight_stats.mean,
        weight_se: weight_stats.se,
        tau_p50,
        tau_p90,
        tau_max,
        max_bracket_excess: max_excess,
        mean_kappa: kappa_sum / n as f64,
        max_kappa: kappa_max,
    })
}
