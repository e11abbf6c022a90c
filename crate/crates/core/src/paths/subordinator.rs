//! Subordinator laws and clock sampling.
//!
//! Each coordinate carries its own independent subordinator. Three families
//! are supported:
//!
//! * `Stable { alpha }`: the one-sided stable subordinator normalised so
//!   that `E exp(-z S(t)) = exp(-t z^{alpha/2})`; this is the clock that
//!   turns `W_j(S_j(t))` into a symmetric `alpha`-stable coordinate.
//! * `Gamma { shape, rate }`: increments `Gamma(shape * dt, rate)`.
//! * `CompoundPoisson { rate, jump_mean, drift }`: exponential jumps on top
//!   of a deterministic drift. The drift must be positive so the clock is
//!   strictly positive for `t > 0`; `rate = 0` degenerates to the
//!   deterministic clock `l(t) = drift * t`.

use super::clock::{ClockInterpolation, ClockPath};
use crate::error::{Error, Result};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use std::f64::consts::PI;

/// Marginal law of one clock coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordinateLaw {
    Stable { alpha: f64 },
    Gamma { shape: f64, rate: f64 },
    CompoundPoisson { rate: f64, jump_mean: f64, drift: f64 },
}

/// A `d`-dimensional subordinator: independent coordinates, one law each.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorSpec {
    laws: Vec<CoordinateLaw>,
}

impl SubordinatorSpec {
    pub fn new(laws: Vec<CoordinateLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::Spec("subordinator needs at least one coordinate".into()));
        }
        for (j, law) in laws.iter().enumerate() {
            match *law {
                CoordinateLaw::Stable { alpha } => {
                    if !(alpha > 0.0 && alpha < 2.0) {
                        return Err(Error::Spec(format!(
                            "coordinate {j}: stable index must lie in (0, 2), got {alpha}"
                        )));
                    }
                }
                CoordinateLaw::Gamma { shape, rate } => {
                    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                        return Err(Error::Spec(format!(
                            "coordinate {j}: gamma law needs shape > 0 and rate > 0, got ({shape}, {rate})"
                        )));
                    }
                }
                CoordinateLaw::CompoundPoisson { rate, jump_mean, drift } => {
                    if !(rate >= 0.0 && rate.is_finite()) {
                        return Err(Error::Spec(format!(
                            "coordinate {j}: compound-Poisson rate must be >= 0, got {rate}"
                        )));
                    }
                    if rate > 0.0 && !(jump_mean > 0.0 && jump_mean.is_finite()) {
                        return Err(Error::Spec(format!(
                            "coordinate {j}: compound-Poisson jump mean must be > 0, got {jump_mean}"
                        )));
                    }
                    // Without drift the clock sits at zero until the first
                    // jump, so it would not be strictly positive for t > 0.
                    if !(drift > 0.0 && drift.is_finite()) {
                        return Err(Error::Spec(format!(
                            "coordinate {j}: compound-Poisson clock needs drift > 0, got {drift}"
                        )));
                    }
                }
            }
        }
        Ok(Self { laws })
    }

    /// Same law in every one of `d` coordinates.
    pub fn homogeneous(law: CoordinateLaw, d: usize) -> Result<Self> {
        Self::new(vec![law; d])
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    #[must_use]
    pub fn law(&self, j: usize) -> CoordinateLaw {
        self.laws[j]
    }

    #[must_use]
    pub fn laws(&self) -> &[CoordinateLaw] {
        &self.laws
    }

    /// True when every coordinate is a deterministic drift clock.
    #[must_use]
    pub fn is_deterministic(&self) -> bool {
        self.laws.iter().all(|law| {
            matches!(law, CoordinateLaw::CompoundPoisson { rate, .. } if *rate == 0.0)
        })
    }

    /// Parses a per-coordinate descriptor:
    /// `stable:<alpha>`, `gamma:<shape>,<rate>`,
    /// `cp:<rate>,<jump_mean>,<drift>`, or `drift:<theta>`.
    pub fn parse_law(descriptor: &str) -> Result<CoordinateLaw> {
        let nums = |s: &str, want: usize| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                s.split(',').map(|x| x.trim().parse::<f64>()).collect();
            match vals {
                Ok(v) if v.len() == want => Ok(v),
                _ => Err(Error::Spec(format!(
                    "subordinator descriptor {descriptor:?}: expected {want} numeric parameters"
                ))),
            }
        };
        let law = if let Some(arg) = descriptor.strip_prefix("stable:") {
            CoordinateLaw::Stable { alpha: nums(arg, 1)?[0] }
        } else if let Some(arg) = descriptor.strip_prefix("gamma:") {
            let v = nums(arg, 2)?;
            CoordinateLaw::Gamma { shape: v[0], rate: v[1] }
        } else if let Some(arg) = descriptor.strip_prefix("cp:") {
            let v = nums(arg, 3)?;
            CoordinateLaw::CompoundPoisson { rate: v[0], jump_mean: v[1], drift: v[2] }
        } else if let Some(arg) = descriptor.strip_prefix("drift:") {
            CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: nums(arg, 1)?[0] }
        } else {
            return Err(Error::Spec(format!(
                "unknown subordinator descriptor {descriptor:?}; expected stable:<alpha>, \
                 gamma:<shape>,<rate>, cp:<rate>,<jump_mean>,<drift>, or drift:<theta>"
            )));
        };
        // Validation shares the constructor's rules.
        SubordinatorSpec::new(vec![law])?;
        Ok(law)
    }
}

impl std::fmt::Display for CoordinateLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Stable { alpha } => write!(f, "stable:{alpha}"),
            Self::Gamma { shape, rate } => write!(f, "gamma:{shape},{rate}"),
            Self::CompoundPoisson { rate, jump_mean, drift } => {
                if *rate == 0.0 {
                    write!(f, "drift:{drift}")
                } else {
                    write!(f, "cp:{rate},{jump_mean},{drift}")
                }
            }
        }
    }
}

/// One-sided `beta`-stable variable with `E exp(-z S) = exp(-z^beta)`,
/// `beta` in `(0, 1)`, by the Kanter representation
/// `S = sin(beta U) sin(U)^{-1/beta} (sin((1-beta) U) / W)^{(1-beta)/beta}`
/// with `U ~ Uniform(0, pi)` and `W ~ Exp(1)`.
pub(crate) fn sample_one_sided_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    let u = clamp_open01(rng.random::<f64>()) * PI;
    let w = -clamp_open01(rng.random::<f64>()).ln();
    let s1 = (beta * u).sin() / u.sin().powf(1.0 / beta);
    let s2 = (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
    s1 * s2
}

fn clamp_open01(x: f64) -> f64 {
    x.clamp(1e-12, 1.0 - 1e-12)
}

/// Samples one increment of the law over a window of length `dt > 0`.
pub(crate) fn sample_increment<R: Rng + ?Sized>(law: CoordinateLaw, dt: f64, rng: &mut R) -> f64 {
    debug_assert!(dt > 0.0);
    match law {
        CoordinateLaw::Stable { alpha } => {
            // Laplace exponent z^{alpha/2} over unit time scales increments
            // by dt^{2/alpha}.
            let beta = 0.5 * alpha;
            dt.powf(1.0 / beta) * sample_one_sided_stable(beta, rng)
        }
        CoordinateLaw::Gamma { shape, rate } => {
            let g = Gamma::new(shape * dt, 1.0 / rate).expect("validated gamma parameters");
            g.sample(rng)
        }
        CoordinateLaw::CompoundPoisson { rate, jump_mean, drift } => {
            let mut inc = drift * dt;
            if rate > 0.0 {
                let n = Poisson::new(rate * dt).expect("validated Poisson rate").sample(rng);
                let jump = Exp::new(1.0 / jump_mean).expect("validated jump mean");
                for _ in 0..n as u64 {
                    inc += jump.sample(rng);
                }
            }
            inc
        }
    }
}

/// Samples the full clock on the uniform grid `t_i = i T / n_steps`.
///
/// Coordinates are sampled independently; increments over disjoint windows
/// are independent. Deterministic (pure drift) specs are tagged `Linear`
/// because their clock genuinely is; everything else is a pure-jump or
/// jump-plus-drift sample tagged `Step`.
pub fn sample_subordinator<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    t_max: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<ClockPath> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!("clock horizon must be positive, got {t_max}")));
    }
    if n_steps == 0 {
        return Err(Error::Domain("clock sampling needs at least one step".into()));
    }
    let dt = t_max / n_steps as f64;
    let grid: Vec<f64> = (0..=n_steps)
        .map(|i| if i == n_steps { t_max } else { i as f64 * dt })
        .collect();
    let mut values = Vec::with_capacity(spec.dim());
    for j in 0..spec.dim() {
        let law = spec.law(j);
        let mut col = Vec::with_capacity(n_steps + 1);
        let mut acc = 0.0f64;
        col.push(acc);
        for i in 0..n_steps {
            let width = grid[i + 1] - grid[i];
            acc += sample_increment(law, width, rng);
            col.push(acc);
        }
        values.push(col);
    }
    let interp = if spec.is_deterministic() {
        ClockInterpolation::Linear
    } else {
        ClockInterpolation::Step
    };
    ClockPath::new(grid, values, interp)
}

/// Samples the clock vector at a single horizon `t` in one shot.
pub fn sample_terminal<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("clock horizon must be positive, got {t}")));
    }
    Ok((0..spec.dim())
        .map(|j| sample_increment(spec.law(j), t, rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::MeanSe;

    #[test]
    fn validation_rejects_bad_laws() {
        assert!(SubordinatorSpec::new(vec![CoordinateLaw::Stable { alpha: 2.0 }]).is_err());
        assert!(SubordinatorSpec::new(vec![CoordinateLaw::Stable { alpha: 0.0 }]).is_err());
        assert!(SubordinatorSpec::new(vec![CoordinateLaw::Gamma { shape: 0.0, rate: 1.0 }]).is_err());
        // Jump part without drift would leave the clock at zero for small t.
        assert!(SubordinatorSpec::new(vec![CoordinateLaw::CompoundPoisson {
            rate: 1.0,
            jump_mean: 1.0,
            drift: 0.0,
        }])
        .is_err());
        assert!(SubordinatorSpec::new(vec![]).is_err());
    }

    #[test]
    fn descriptors_parse_and_render() {
        let law = SubordinatorSpec::parse_law("stable:1.5").unwrap();
        assert_eq!(law, CoordinateLaw::Stable { alpha: 1.5 });
        assert_eq!(law.to_string(), "stable:1.5");
        let drift = SubordinatorSpec::parse_law("drift:2").unwrap();
        assert!(matches!(drift, CoordinateLaw::CompoundPoisson { rate, drift, .. } if rate == 0.0 && drift == 2.0));
        assert!(SubordinatorSpec::parse_law("stable:2.5").is_err());
        assert!(SubordinatorSpec::parse_law("weird:1").is_err());
    }

    #[test]
    fn sampled_clock_is_monotone_and_anchored() {
        let spec = SubordinatorSpec::new(vec![
            CoordinateLaw::Stable { alpha: 1.2 },
            CoordinateLaw::Gamma { shape: 2.0, rate: 1.0 },
            CoordinateLaw::CompoundPoisson { rate: 3.0, jump_mean: 0.5, drift: 0.1 },
        ])
        .unwrap();
        let mut rng = substream(11, 0);
        let clock = sample_subordinator(&spec, 2.0, 64, &mut rng).unwrap();
        assert_eq!(clock.dim(), 3);
        assert_eq!(clock.grid().len(), 65);
        for j in 0..3 {
            assert_eq!(clock.value_at_index(j, 0), 0.0);
            assert!(clock
                .coordinate(j)
                .windows(2)
                .all(|w| w[1] >= w[0]));
            assert!(clock.value_at_index(j, 64) > 0.0);
        }
    }

    #[test]
    fn deterministic_drift_clock_is_exact_and_linear() {
        let spec = SubordinatorSpec::homogeneous(
            CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: 1.0 },
            1,
        )
        .unwrap();
        let mut rng = substream(0, 0);
        let clock = sample_subordinator(&spec, 1.0, 10, &mut rng).unwrap();
        assert_eq!(clock.interpolation(), ClockInterpolation::Linear);
        for (i, &t) in clock.grid().iter().enumerate() {
            assert!((clock.value_at_index(0, i) - t).abs() < 1e-15);
        }
        assert!((clock.value_at(0, 0.55) - 0.55).abs() < 1e-15);
    }

    /// Laplace-transform check of the Kanter sampler: the stable clock with
    /// index alpha satisfies E exp(-z S(1)) = exp(-z^{alpha/2}).
    #[test]
    fn stable_laplace_transform_matches() {
        for &alpha in &[0.8, 1.0, 1.5] {
            let law = CoordinateLaw::Stable { alpha };
            let mut rng = substream(2024, alpha.to_bits());
            for &z in &[0.5f64, 1.0, 2.0] {
                let n = 200_000;
                let samples: Vec<f64> = (0..n)
                    .map(|_| (-z * sample_increment(law, 1.0, &mut rng)).exp())
                    .collect();
                let est = MeanSe::from_samples(&samples);
                let expect = (-z.powf(alpha / 2.0)).exp();
                assert!(
                    (est.mean - expect).abs() <= 3.0 * est.se,
                    "alpha = {alpha}, z = {z}: {} vs {expect} (se {})",
                    est.mean,
                    est.se
                );
            }
        }
    }

    /// Increment scaling: S(t) must equal t^{2/alpha} S(1) in law, checked
    /// through the Laplace transform at a second horizon.
    #[test]
    fn stable_increment_scaling_in_time() {
        let law = CoordinateLaw::Stable { alpha: 1.0 };
        let mut rng = substream(7, 1);
        let t = 0.5f64;
        let z = 1.0f64;
        let n = 200_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| (-z * sample_increment(law, t, &mut rng)).exp())
            .collect();
        let est = MeanSe::from_samples(&samples);
        let expect = (-t * z.powf(0.5)).exp();
        assert!(
            (est.mean - expect).abs() <= 3.0 * est.se,
            "{} vs {expect} (se {})",
            est.mean,
            est.se
        );
    }

    #[test]
    fn gamma_clock_mean_matches() {
        let law = CoordinateLaw::Gamma { shape: 2.0, rate: 4.0 };
        let mut rng = substream(9, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_increment(law, 1.5, &mut rng)).collect();
        let est = MeanSe::from_samples(&samples);
        // Mean of Gamma(shape * t, rate) is shape * t / rate.
        let expect = 2.0 * 1.5 / 4.0;
        assert!((est.mean - expect).abs() <= 3.0 * est.se);
    }

    #[test]
    fn compound_poisson_mean_matches() {
        let law = CoordinateLaw::CompoundPoisson { rate: 2.0, jump_mean: 0.5, drift: 0.25 };
        let mut rng = substream(13, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_increment(law, 1.0, &mut rng)).collect();
        let est = MeanSe::from_samples(&samples);
        // drift * t + rate * t * jump_mean.
        let expect = 0.25 + 2.0 * 0.5;
        assert!((est.mean - expect).abs() <= 3.0 * est.se);
    }
}
