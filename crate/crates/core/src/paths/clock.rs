//! Clock paths: per-coordinate non-decreasing time changes on a shared grid.

use crate::error::{Error, Result};
use std::fmt::Write as _;

/// How clock values are understood between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockInterpolation {
    /// Piecewise constant, right-continuous: the value jumps at grid points.
    /// Matches pure-jump subordinators sampled at grid resolution.
    Step,
    /// Piecewise linear. Exact for drift-only clocks and the natural
    /// representation of regularized (absolutely continuous) clocks.
    Linear,
}

/// A realised `d`-dimensional clock on a strictly increasing grid starting
/// at zero.
///
/// Values are non-decreasing per coordinate. Freshly sampled subordinators
/// start at zero; regularized clocks may start strictly above zero because
/// the forward-window average already sees mass ahead of `t = 0`. Beyond the
/// last grid point the clock extends by its final value.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockPath {
    grid: Vec<f64>,
    /// `values[j][i]` is coordinate `j` at `grid[i]`.
    values: Vec<Vec<f64>>,
    interp: ClockInterpolation,
}

impl ClockPath {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>, interp: ClockInterpolation) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Spec("clock grid needs at least two points".into()));
        }
        if grid[0] != 0.0 {
            return Err(Error::Spec(format!(
                "clock grid must start at 0, got {}",
                grid[0]
            )));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Spec(format!(
                    "clock grid must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if values.is_empty() {
            return Err(Error::Spec("clock needs at least one coordinate".into()));
        }
        for (j, col) in values.iter().enumerate() {
            if col.len() != grid.len() {
                return Err(Error::Spec(format!(
                    "clock coordinate {j} has {} values for {} grid points",
                    col.len(),
                    grid.len()
                )));
            }
            if !(col[0] >= 0.0) {
                return Err(Error::Spec(format!(
                    "clock coordinate {j} starts at {}, must be >= 0",
                    col[0]
                )));
            }
            for (i, w) in col.windows(2).enumerate() {
                if !(w[1] >= w[0]) || !w[1].is_finite() {
                    return Err(Error::Spec(format!(
                        "clock coordinate {j} decreases at grid index {}: {} then {}",
                        i + 1,
                        w[0],
                        w[1]
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            values,
            interp,
        })
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[must_use]
    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    #[must_use]
    pub fn interpolation(&self) -> ClockInterpolation {
        self.interp
    }

    /// Clock value of coordinate `j` at grid index `i`.
    #[must_use]
    pub fn value_at_index(&self, j: usize, i: usize) -> f64 {
        self.values[j][i]
    }

    #[must_use]
    pub fn coordinate(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// Clock value at an arbitrary time `t >= 0` under the path's
    /// interpolation rule, constant beyond the last grid point.
    #[must_use]
    pub fn value_at(&self, j: usize, t: f64) -> f64 {
        assert!(t >= 0.0 && !t.is_nan(), "clock queried at t = {t}");
        let col = &self.values[j];
        let n = self.grid.len();
        if t >= self.grid[n - 1] {
            return col[n - 1];
        }
        // Largest i with grid[i] <= t; grid[0] = 0 <= t guarantees i >= 0.
        let i = self.grid.partition_point(|&g| g <= t) - 1;
        match self.interp {
            ClockInterpolation::Step => col[i],
            ClockInterpolation::Linear => {
                let w = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
                col[i] * (1.0 - w) + col[i + 1] * w
            }
        }
    }

    /// Exact integral of coordinate `j` over `[a, b]` under the path's
    /// interpolation rule (piecewise polynomial of degree at most one),
    /// with constant extension beyond the grid.
    #[must_use]
    pub fn integral(&self, j: usize, a: f64, b: f64) -> f64 {
        assert!(0.0 <= a && a <= b && b.is_finite(), "bad window [{a}, {b}]");
        if a == b {
            return 0.0;
        }
        let col = &self.values[j];
        let n = self.grid.len();
        let mut total = 0.0;
        // Interior segments [grid[i], grid[i+1]] overlapping the window.
        let start = self.grid.partition_point(|&g| g <= a).saturating_sub(1);
        for i in start..n - 1 {
            let lo = self.grid[i].max(a);
            let hi = self.grid[i + 1].min(b);
            if hi <= lo {
                if self.grid[i] >= b {
                    break;
                }
                continue;
            }
            match self.interp {
                ClockInterpolation::Step => total += col[i] * (hi - lo),
                ClockInterpolation::Linear => {
                    let seg = self.grid[i + 1] - self.grid[i];
                    let y_lo = col[i] + (col[i + 1] - col[i]) * (lo - self.grid[i]) / seg;
                    let y_hi = col[i] + (col[i + 1] - col[i]) * (hi - self.grid[i]) / seg;
                    total += 0.5 * (y_lo + y_hi) * (hi - lo);
                }
            }
        }
        // Constant tail beyond the last grid point.
        let end = self.grid[n - 1];
        if b > end {
            total += col[n - 1] * (b - end.max(a));
        }
        total
    }

    /// True when coordinate `j` increases strictly across the grid.
    #[must_use]
    pub fn strictly_increasing(&self, j: usize) -> bool {
        self.values[j].windows(2).all(|w| w[1] > w[0])
    }

    /// CSV rendering with header `t,l_1,...,l_d`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.dim() {
            let _ = write!(out, ",l_{j}");
        }
        out.push('\n');
        for (i, t) in self.grid.iter().enumerate() {
            let _ = write!(out, "{t}");
            for col in &self.values {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Forward-window regularization
/// `l^n(t) = n * integral_t^{t+1/n} l(s) ds + t / n` on the input grid.
///
/// The output dominates the input pointwise, decreases monotonically toward
/// it as `n` grows, and is strictly increasing; it carries the `Linear`
/// interpolation tag. Where the analytic increment falls below one ulp of
/// the running value, the value is bumped by one ulp so that strictness
/// survives rounding.
pub fn regularize_clock(ell: &ClockPath, n: u32) -> Result<ClockPath> {
    if n == 0 {
        return Err(Error::Domain("regularization index n must be >= 1".into()));
    }
    let window = 1.0 / f64::from(n);
    let grid = ell.grid().to_vec();
    let mut values = Vec::with_capacity(ell.dim());
    for j in 0..ell.dim() {
        let mut col = Vec::with_capacity(grid.len());
        let mut prev = f64::NEG_INFINITY;
        for &t in &grid {
            let mut v = f64::from(n) * ell.integral(j, t, t + window) + t * window;
            if v <= prev {
                v = prev.next_up();
            }
            col.push(v);
            prev = v;
        }
        values.push(col);
    }
    ClockPath::new(grid, values, ClockInterpolation::Linear)
}
