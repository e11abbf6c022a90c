//! Drift specifications and Euler schemes for
//! `dX_t = b(X_t) dt + dW_{l(t)}`, per-coordinate clocks.
//!
//! Drifts are only assumed to satisfy the one-sided coordinate condition
//! `(x_j - y_j)(b_j(x) - b_j(y)) <= |x_j - y_j| rho(||x - y||_1)` for the
//! declared modulus `rho`; Lipschitz continuity is optional and, when
//! claimed, spot-checked at construction. [`validate_one_sided`] probes the
//! condition on random pairs and reports the worst witness.
//!
//! The solver is the explicit Euler scheme on the clock grid: drift advances
//! by `b(X) dt`, noise by the increment `W_j(l_j(t_{i+1})) - W_j(l_j(t_i))`
//! pulled from a shared [`BrownianStore`], so several solves against the
//! same store and clock see identical noise.

use crate::error::{Error, Result};
use crate::paths::{sample_subordinator, BrownianStore, ClockPath, SubordinatorSpec};
use crate::rho::RhoModulus;
use crate::rng::{fork, substream};
use crate::stats::{dist_l1, norm_l1};
use rand::{Rng, RngExt};
use rand_chacha::ChaCha12Rng;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

/// Hard ceiling on the relative drift displacement in one Euler step;
/// exceeding it aborts the solve as a step-size failure rather than letting
/// the state blow up silently.
const STEP_GUARD: f64 = 10.0;

/// Pairs checked when a claimed Lipschitz constant is spot-checked.
const LIP_SPOT_PAIRS: usize = 64;

/// Built-in drift fields plus an escape hatch for custom ones.
#[derive(Clone)]
pub enum DriftKind {
    /// `b = 0`.
    Zero,
    /// Ornstein-Uhlenbeck pull `b(x) = -lambda x`, `lambda > 0`.
    Ou { lambda: f64 },
    /// Coordinatewise non-Lipschitz decay `b_j(x) = -sign(x_j) eta(|x_j|)`
    /// with `eta(s) = s (1 - ln s)` for `s <= 1` and `eta(s) = s` beyond;
    /// satisfies the one-sided condition for the Osgood modulus (each
    /// coordinate of the difference field is non-increasing).
    Osgood,
    /// Linear field `b(x) = (-I + omega J) x` with `J` the block-diagonal
    /// rotation pairing consecutive coordinates; contracts radially while
    /// rotating, and is one-sided for the modulus `linear(omega)`.
    RotDecay { omega: f64 },
    /// Arbitrary user field writing `b(x)` into the output slice.
    Custom(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
}

impl fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Ou { lambda } => write!(f, "Ou {{ lambda: {lambda} }}"),
            Self::Osgood => write!(f, "Osgood"),
            Self::RotDecay { omega } => write!(f, "RotDecay {{ omega: {omega} }}"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Ou { lambda } => write!(f, "ou:{lambda}"),
            Self::Osgood => write!(f, "osgood"),
            Self::RotDecay { omega } => write!(f, "rot-decay:{omega}"),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

/// A drift field together with the modulus certifying its one-sided bound
/// and an optional Lipschitz claim.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    d: usize,
    kind: DriftKind,
    rho: RhoModulus,
    lipschitz: Option<f64>,
}

impl DriftSpec {
    /// Builds a drift spec; a claimed Lipschitz constant is spot-checked on
    /// random pairs in `[-2, 2]^d` before the spec is accepted.
    pub fn new(
        d: usize,
        kind: DriftKind,
        rho: RhoModulus,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Spec("drift dimension must be at least 1".into()));
        }
        if let DriftKind::Ou { lambda } = kind {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Spec(format!("OU rate must be positive, got {lambda}")));
            }
        }
        if let DriftKind::RotDecay { omega } = kind {
            if !(omega >= 0.0 && omega.is_finite()) {
                return Err(Error::Spec(format!(
                    "rotation strength must be >= 0, got {omega}"
                )));
            }
        }
        if let Some(l) = lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Spec(format!("Lipschitz claim must be >= 0, got {l}")));
            }
        }
        let spec = Self {
            d,
            kind,
            rho,
            lipschitz,
        };
        if let Some(l) = lipschitz {
            spec.spot_check_lipschitz(l)?;
        }
        Ok(spec)
    }

    /// Spot check `||b(x) - b(y)||_1 <= l ||x - y||_1` on a fixed set of
    /// random pairs; the internal seed is constant so construction stays
    /// deterministic.
    fn spot_check_lipschitz(&self, l: f64) -> Result<()> {
        let mut rng = substream(0x0d01_f00d, 0);
        let mut bx = vec![0.0; self.d];
        let mut by = vec![0.0; self.d];
        for _ in 0..LIP_SPOT_PAIRS {
            let x: Vec<f64> = (0..self.d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..self.d).map(|_| rng.random_range(-2.0..2.0)).collect();
            self.eval(&x, &mut bx);
            self.eval(&y, &mut by);
            let lhs = dist_l1(&bx, &by);
            let rhs = l * dist_l1(&x, &y);
            if lhs > rhs + 1e-9 * (1.0 + lhs.abs()) {
                return Err(Error::Spec(format!(
                    "claimed Lipschitz constant {l} fails at x = {x:?}, y = {y:?}: {lhs} > {rhs}"
                )));
            }
        }
        Ok(())
    }

    /// Parses a drift descriptor: `zero`, `ou:<lambda>`, `osgood`,
    /// `rot-decay` or `rot-decay:<omega>`. The returned spec carries the
    /// family's natural Lipschitz claim where one exists.
    pub fn parse(descriptor: &str, d: usize, rho: RhoModulus) -> Result<Self> {
        if descriptor == "zero" {
            return Self::new(d, DriftKind::Zero, rho, Some(0.0));
        }
        if let Some(arg) = descriptor.strip_prefix("ou:") {
            let lambda: f64 = arg
                .parse()
                .map_err(|_| Error::Spec(format!("bad OU rate in drift descriptor {descriptor:?}")))?;
            return Self::new(d, DriftKind::Ou { lambda }, rho, Some(lambda));
        }
        if descriptor == "osgood" {
            return Self::new(d, DriftKind::Osgood, rho, None);
        }
        if descriptor == "rot-decay" || descriptor.starts_with("rot-decay:") {
            let omega: f64 = match descriptor.strip_prefix("rot-decay:") {
                Some(arg) => arg.parse().map_err(|_| {
                    Error::Spec(format!("bad rotation strength in drift descriptor {descriptor:?}"))
                })?,
                None => 1.0,
            };
            // l1 operator norm of -I + omega J: worst column holds the
            // diagonal entry and one rotation entry.
            let lip = if d >= 2 { 1.0 + omega } else { 1.0 };
            return Self::new(d, DriftKind::RotDecay { omega }, rho, Some(lip));
        }
        Err(Error::Spec(format!(
            "unknown drift descriptor {descriptor:?}; expected zero, ou:<lambda>, osgood, or rot-decay[:<omega>]"
        )))
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[must_use]
    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    #[must_use]
    pub fn rho(&self) -> &RhoModulus {
        &self.rho
    }

    #[must_use]
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Evaluates `b(x)` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.d, "drift evaluated at wrong dimension");
        assert_eq!(out.len(), self.d);
        match &self.kind {
            DriftKind::Zero => out.fill(0.0),
            DriftKind::Ou { lambda } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -lambda * xi;
                }
            }
            DriftKind::Osgood => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    let s = xi.abs();
                    let eta = if s == 0.0 {
                        0.0
                    } else if s <= 1.0 {
                        s * (1.0 - s.ln())
                    } else {
                        s
                    };
                    *o = -xi.signum() * eta;
                }
            }
            DriftKind::RotDecay { omega } => {
                for j in 0..self.d {
                    out[j] = -x[j];
                }
                let mut j = 0;
                while j + 1 < self.d {
                    out[j] += omega * x[j + 1];
                    out[j + 1] -= omega * x[j];
                    j += 2;
                }
            }
            DriftKind::Custom(f) => f(x, out),
        }
    }
}

/// Axis-aligned sampling region for the validator.
#[derive(Debug, Clone)]
pub struct SampleBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Spec("sample box bounds must have equal positive length".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::Spec(format!("sample box needs lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-half, half]^d`.
    pub fn centered(d: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; d], vec![half; d])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.random_range(l..h))
            .collect()
    }
}

/// Worst witness found by [`validate_one_sided`].
#[derive(Debug, Clone)]
pub struct ViolationWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub coord: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a randomized one-sided-condition probe.
#[derive(Debug, Clone)]
pub struct OneSidedReport {
    pub n_pairs: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen over all pairs and coordinates; negative
    /// when the condition held everywhere.
    pub max_violation: f64,
    pub worst: Option<ViolationWitness>,
}

impl OneSidedReport {
    #[must_use]
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Probes `(x_j - y_j)(b_j(x) - b_j(y)) <= |x_j - y_j| rho(||x - y||_1)`
/// on `n_pairs` random pairs from `sample_box`, with slack
/// `1e-12 (1 + |lhs|)` absorbing rounding.
pub fn validate_one_sided(
    b: &DriftSpec,
    sample_box: &SampleBox,
    n_pairs: usize,
    seed: u64,
) -> Result<OneSidedReport> {
    if sample_box.lo.len() != b.dim() {
        return Err(Error::Spec(format!(
            "sample box dimension {} does not match drift dimension {}",
            sample_box.lo.len(),
            b.dim()
        )));
    }
    if n_pairs == 0 {
        return Err(Error::Domain("one-sided validation needs at least one pair".into()));
    }
    let mut rng = substream(seed, 0);
    let d = b.dim();
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut report = OneSidedReport {
        n_pairs,
        violations: 0,
        max_violation: f64::NEG_INFINITY,
        worst: None,
    };
    for _ in 0..n_pairs {
        let x = sample_box.sample(&mut rng);
        let y = sample_box.sample(&mut rng);
        let dist = dist_l1(&x, &y);
        if dist == 0.0 {
            continue;
        }
        let rho_dist = b.rho().eval(dist);
        b.eval(&x, &mut bx);
        b.eval(&y, &mut by);
        for j in 0..d {
            let lhs = (x[j] - y[j]) * (bx[j] - by[j]);
            let rhs = (x[j] - y[j]).abs() * rho_dist;
            let gap = lhs - rhs;
            if gap > report.max_violation {
                report.max_violation = gap;
                report.worst = Some(ViolationWitness {
                    x: x.clone(),
                    y: y.clone(),
                    coord: j,
                    lhs,
                    rhs,
                });
            }
            if lhs > rhs + 1e-12 * (1.0 + lhs.abs()) {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// An Euler solution on the clock grid.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    grid: Vec<f64>,
    /// `states[i]` is the state at `grid[i]`.
    states: Vec<Vec<f64>>,
    clock: ClockPath,
    store_id: u64,
}

impl SolutionPath {
    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[must_use]
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    #[must_use]
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("non-empty path")
    }

    #[must_use]
    pub fn clock(&self) -> &ClockPath {
        &self.clock
    }

    /// Identity of the driving store; two paths with equal ids were driven
    /// by the same noise realisation.
    #[must_use]
    pub fn store_id(&self) -> u64 {
        self.store_id
    }

    /// CSV rendering with header `t,X_1,...,X_d`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let d = self.states[0].len();
        let mut out = String::from("t");
        for j in 1..=d {
            let _ = write!(out, ",X_{j}");
        }
        out.push('\n');
        for (t, row) in self.grid.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// One Euler pass over the clock grid; optionally records the full path.
fn euler_run(
    b: &DriftSpec,
    x0: &[f64],
    ell: &ClockPath,
    store: &mut BrownianStore,
    record: bool,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = b.dim();
    if x0.len() != d || ell.dim() != d || store.dim() != d {
        return Err(Error::Spec(format!(
            "dimension mismatch: drift {d}, x0 {}, clock {}, store {}",
            x0.len(),
            ell.dim(),
            store.dim()
        )));
    }
    let grid = ell.grid();
    let mut state = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut recorded = Vec::new();
    if record {
        recorded.reserve(grid.len());
        recorded.push(state.clone());
    }
    // Clock values at the step start, refreshed as the step advances.
    let mut u_prev: Vec<f64> = (0..d).map(|j| ell.value_at_index(j, 0)).collect();
    let mut w_prev: Vec<f64> = (0..d).map(|j| store.value(j, u_prev[j])).collect();
    for i in 0..grid.len() - 1 {
        let dt = grid[i + 1] - grid[i];
        b.eval(&state, &mut drift);
        let drift_l1 = norm_l1(&drift);
        if !drift_l1.is_finite() {
            return Err(Error::Numerical(format!(
                "drift not finite at t = {} with state {state:?}",
                grid[i]
            )));
        }
        if drift_l1 * dt > STEP_GUARD * (1.0 + norm_l1(&state)) {
            return Err(Error::Numerical(format!(
                "step-size guard tripped at t = {}: |b| dt = {} against state norm {}",
                grid[i],
                drift_l1 * dt,
                norm_l1(&state)
            )));
        }
        for j in 0..d {
            let u_next = ell.value_at_index(j, i + 1);
            let w_next = store.value(j, u_next);
            state[j] += drift[j] * dt + (w_next - w_prev[j]);
            u_prev[j] = u_next;
            w_prev[j] = w_next;
            if !state[j].is_finite() {
                return Err(Error::Numerical(format!(
                    "state not finite at t = {} in coordinate {j}",
                    grid[i + 1]
                )));
            }
        }
        if record {
            recorded.push(state.clone());
        }
    }
    Ok((state, recorded))
}

/// Solves the SDE along a fixed realised clock, recording the full path.
pub fn solve_conditional(
    b: &DriftSpec,
    x0: &[f64],
    ell: &ClockPath,
    store: &mut BrownianStore,
) -> Result<SolutionPath> {
    let (_, states) = euler_run(b, x0, ell, store, true)?;
    Ok(SolutionPath {
        grid: ell.grid().to_vec(),
        states,
        clock: ell.clone(),
        store_id: store.id(),
    })
}

/// Terminal state only; the memory-light workhorse for Monte Carlo batches.
pub fn solve_conditional_terminal(
    b: &DriftSpec,
    x0: &[f64],
    ell: &ClockPath,
    store: &mut BrownianStore,
) -> Result<Vec<f64>> {
    let (terminal, _) = euler_run(b, x0, ell, store, false)?;
    Ok(terminal)
}

/// Samples a fresh clock and fresh noise, then solves to the horizon; the
/// two generators are forked from `rng` in a fixed order.
pub fn solve_unconditional(
    b: &DriftSpec,
    x0: &[f64],
    spec: &SubordinatorSpec,
    t_horizon: f64,
    n_steps: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if spec.dim() != b.dim() {
        return Err(Error::Spec(format!(
            "subordinator dimension {} does not match drift dimension {}",
            spec.dim(),
            b.dim()
        )));
    }
    let mut clock_rng = fork(rng);
    let noise_rng = fork(rng);
    let ell = sample_subordinator(spec, t_horizon, n_steps, &mut clock_rng)?;
    let mut store = BrownianStore::new(b.dim(), noise_rng);
    solve_conditional_terminal(b, x0, &ell, &mut store)
}
