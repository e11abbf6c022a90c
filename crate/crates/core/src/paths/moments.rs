//! Inverse-moment oracles for clock marginals.
//!
//! The Harnack penalties are driven by `E [ S_j(t)^{-1} ]` and, for the
//! power inequality, by exponential moments `E exp(lambda / S_j(t))`. Both
//! are estimated by plain Monte Carlo here; where a closed form exists it is
//! exposed separately so estimates can be checked against it.
//!
//! Closed forms (`beta = alpha / 2` is the clock's Laplace exponent power):
//!
//! * stable: `E S(t)^{-1} = integral_0^inf E exp(-z S(t)) dz
//!   = integral_0^inf exp(-t z^beta) dz = Gamma(1 + 1/beta) t^{-1/beta}`,
//!   i.e. `Gamma(1 + 2/alpha) t^{-2/alpha}`;
//! * pure drift `theta t`: exactly `1 / (theta t)`;
//! * gamma with shape `k = shape * t`: `rate / (k - 1)` for `k > 1` and
//!   infinite otherwise.
//!
//! The exponential moment is finite for compound-Poisson clocks (bounded
//! below by their drift) and for stable clocks with `alpha > 1`; it is
//! infinite for stable `alpha <= 1` and for gamma clocks, whose densities
//! put too much mass near zero. Those cases are rejected with a domain
//! error instead of returning a divergent estimate.

use super::subordinator::{sample_increment, CoordinateLaw, SubordinatorSpec};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::stats::MeanSe;
use statrs::function::gamma::gamma;

fn check_args(spec: &SubordinatorSpec, j: usize, t: f64, n_samples: usize) -> Result<()> {
    if j >= spec.dim() {
        return Err(Error::Spec(format!(
            "coordinate {j} out of range for dimension {}",
            spec.dim()
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    if n_samples < 2 {
        return Err(Error::Domain("moment estimation needs at least two samples".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of `E [ S_j(t)^{-1} ]` from `n_samples` fresh
/// increments of coordinate `j`.
pub fn inverse_moment(
    spec: &SubordinatorSpec,
    j: usize,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MeanSe> {
    check_args(spec, j, t, n_samples)?;
    let law = spec.law(j);
    let mut rng = substream(seed, j as u64);
    let mut draws = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let s = sample_increment(law, t, &mut rng);
        if !(s > 0.0) {
            return Err(Error::DegenerateClock(format!(
                "clock sample {s} is not strictly positive for law {law}"
            )));
        }
        draws.push(1.0 / s);
    }
    Ok(MeanSe::from_samples(&draws))
}

/// Closed form of `E [ S(t)^{-1} ]` where one exists: `Some(value)` for
/// stable, drift, and gamma clocks (infinite gamma moments come back as
/// `Some(inf)`), `None` for compound-Poisson clocks with jumps.
pub fn inverse_moment_analytic(law: CoordinateLaw, t: f64) -> Result<Option<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    Ok(match law {
        CoordinateLaw::Stable { alpha } => {
            Some(gamma(1.0 + 2.0 / alpha) * t.powf(-2.0 / alpha))
        }
        CoordinateLaw::Gamma { shape, rate } => {
            let k = shape * t;
            if k > 1.0 {
                Some(rate / (k - 1.0))
            } else {
                Some(f64::INFINITY)
            }
        }
        CoordinateLaw::CompoundPoisson { rate, drift, .. } => {
            if rate == 0.0 {
                Some(1.0 / (drift * t))
            } else {
                None
            }
        }
    })
}

/// Monte Carlo estimate of `E exp(lambda / S_j(t))` for `lambda >= 0`.
///
/// Laws whose exponential inverse moment diverges are rejected up front:
/// stable clocks need `alpha > 1`, and gamma clocks are always rejected.
/// `lambda = 0` short-circuits to the exact value one.
pub fn exp_inverse_moment(
    spec: &SubordinatorSpec,
    j: usize,
    t: f64,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MeanSe> {
    check_args(spec, j, t, n_samples)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(MeanSe { mean: 1.0, se: 0.0, n: n_samples });
    }
    let law = spec.law(j);
    match law {
        CoordinateLaw::Stable { alpha } => {
            if alpha <= 1.0 {
                return Err(Error::Domain(format!(
                    "E exp(lambda / S(t)) is infinite for stable index {alpha} <= 1"
                )));
            }
        }
        CoordinateLaw::Gamma { .. } => {
            return Err(Error::Domain(
                "E exp(lambda / S(t)) is infinite for gamma clocks: the density keeps \
                 polynomial mass near zero"
                    .into(),
            ));
        }
        CoordinateLaw::CompoundPoisson { .. } => {}
    }
    let mut rng = substream(seed, j as u64);
    let mut draws = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let s = sample_increment(law, t, &mut rng);
        if !(s > 0.0) {
            return Err(Error::DegenerateClock(format!(
                "clock sample {s} is not strictly positive for law {law}"
            )));
        }
        draws.push((lambda / s).exp());
    }
    Ok(MeanSe::from_samples(&draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_inverse_moment_matches_closed_form() {
        // alpha = 1, t = 1: Gamma(3) = 2.
        let spec = SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.0 }, 1).unwrap();
        let exact = inverse_moment_analytic(spec.law(0), 1.0).unwrap().unwrap();
        assert!((exact - 2.0).abs() < 1e-12);
        let est = inverse_moment(&spec, 0, 1.0, 200_000, 42).unwrap();
        assert!(
            (est.mean - exact).abs() < 3.0 * est.se,
            "estimate {} +- {} vs {exact}",
            est.mean,
            est.se
        );
    }

    #[test]
    fn stable_inverse_moment_scales_in_t() {
        let law = CoordinateLaw::Stable { alpha: 1.5 };
        let a = inverse_moment_analytic(law, 0.5).unwrap().unwrap();
        let b = inverse_moment_analytic(law, 1.0).unwrap().unwrap();
        // t^{-4/3} scaling.
        assert!((a / b - 0.5f64.powf(-4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn drift_clock_inverse_moment_is_exact() {
        let spec = SubordinatorSpec::homogeneous(
            CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: 2.0 },
            1,
        )
        .unwrap();
        let est = inverse_moment(&spec, 0, 0.5, 100, 7).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.se, 0.0);
        assert_eq!(inverse_moment_analytic(spec.law(0), 0.5).unwrap(), Some(1.0));
    }

    #[test]
    fn gamma_inverse_moment_matches_closed_form() {
        let law = CoordinateLaw::Gamma { shape: 3.0, rate: 2.0 };
        let spec = SubordinatorSpec::new(vec![law]).unwrap();
        // shape * t = 3 > 1: rate / (shape t - 1) = 1.
        assert_eq!(inverse_moment_analytic(law, 1.0).unwrap(), Some(1.0));
        let est = inverse_moment(&spec, 0, 1.0, 200_000, 11).unwrap();
        assert!((est.mean - 1.0).abs() < 3.0 * est.se, "estimate {} +- {}", est.mean, est.se);
        // shape * t <= 1: the moment diverges.
        assert_eq!(inverse_moment_analytic(law, 0.2).unwrap(), Some(f64::INFINITY));
    }

    #[test]
    fn compound_poisson_has_no_closed_form_but_estimates_fine() {
        let law = CoordinateLaw::CompoundPoisson { rate: 2.0, jump_mean: 0.5, drift: 1.0 };
        let spec = SubordinatorSpec::new(vec![law]).unwrap();
        assert_eq!(inverse_moment_analytic(law, 1.0).unwrap(), None);
        let est = inverse_moment(&spec, 0, 1.0, 50_000, 3).unwrap();
        // S >= drift * t = 1 pathwise, so the inverse moment sits in (0, 1].
        assert!(est.mean > 0.0 && est.mean <= 1.0, "estimate {}", est.mean);
    }

    #[test]
    fn exp_inverse_moment_gates_divergent_laws() {
        let stable_low =
            SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 0.8 }, 1).unwrap();
        assert!(matches!(
            exp_inverse_moment(&stable_low, 0, 1.0, 0.3, 100, 1),
            Err(Error::Domain(_))
        ));
        let gamma_spec =
            SubordinatorSpec::homogeneous(CoordinateLaw::Gamma { shape: 2.0, rate: 1.0 }, 1)
                .unwrap();
        assert!(matches!(
            exp_inverse_moment(&gamma_spec, 0, 1.0, 0.3, 100, 1),
            Err(Error::Domain(_))
        ));
        // lambda = 0 is exactly one for any law.
        let m = exp_inverse_moment(&gamma_spec, 0, 1.0, 0.0, 100, 1).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.se, 0.0);
    }

    #[test]
    fn exp_inverse_moment_is_stable_under_doubling() {
        let spec = SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.5 }, 1).unwrap();
        let a = exp_inverse_moment(&spec, 0, 1.0, 0.2, 50_000, 5).unwrap();
        let b = exp_inverse_moment(&spec, 0, 1.0, 0.2, 100_000, 6).unwrap();
        assert!(a.mean > 1.0 && b.mean > 1.0);
        let gap = (a.mean - b.mean).abs();
        let tol = 4.0 * (a.se * a.se + b.se * b.se).sqrt();
        assert!(gap < tol, "estimates {} and {} differ by {gap} > {tol}", a.mean, b.mean);
    }
}
