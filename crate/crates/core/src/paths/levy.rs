//! Anisotropic subordinated Brownian motion `L_j(t) = W_j(l_j(t))`.
//!
//! Each coordinate runs an independent Brownian motion on its own clock.
//! With a stable clock of index `alpha_j / 2` (Laplace exponent
//! `z^{alpha_j / 2}`), the coordinate is a symmetric `alpha_j`-stable
//! process; mixed specs give genuinely anisotropic noise. The terminal law
//! needs no grid at all, so [`levy_terminal`] samples it in one shot while
//! [`levy_path`] realises clock and path on a uniform grid.

use super::brownian::BrownianStore;
use super::clock::ClockPath;
use super::subordinator::{sample_increment, sample_subordinator, CoordinateLaw, SubordinatorSpec};
use crate::error::{Error, Result};
use crate::rng::fork;
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;

/// A realised subordinated path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    grid: Vec<f64>,
    /// `states[i]` is the `d`-vector at `grid[i]`.
    states: Vec<Vec<f64>>,
}

impl LevyPath {
    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[must_use]
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    #[must_use]
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("non-empty path")
    }

    /// CSV rendering with header `t,L_1,...,L_d`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.dim() {
            let _ = write!(out, ",L_{j}");
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

/// Samples a clock and evaluates the subordinated motion along it.
///
/// The clock generator and the noise generator are forked from `rng` in
/// that fixed order, so results are reproducible for a given input state.
/// Returns the clock alongside the path; the terminal value is exact in
/// distribution regardless of `n_steps` because the Brownian layer is
/// evaluated, not discretised.
pub fn levy_path(
    spec: &SubordinatorSpec,
    t_max: f64,
    n_steps: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(ClockPath, LevyPath)> {
    let mut clock_rng = fork(rng);
    let noise_rng = fork(rng);
    let ell = sample_subordinator(spec, t_max, n_steps, &mut clock_rng)?;
    let d = spec.dim();
    let mut store = BrownianStore::new(d, noise_rng);
    let mut states = Vec::with_capacity(ell.grid().len());
    for i in 0..ell.grid().len() {
        let row: Vec<f64> = (0..d)
            .map(|j| store.value(j, ell.value_at_index(j, i)))
            .collect();
        states.push(row);
    }
    let path = LevyPath {
        grid: ell.grid().to_vec(),
        states,
    };
    Ok((ell, path))
}

/// Samples `L(t)` directly: one clock increment and one Gaussian per
/// coordinate, interleaved in coordinate order.
pub fn levy_terminal(
    spec: &SubordinatorSpec,
    t: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    Ok((0..spec.dim())
        .map(|j| {
            let s = sample_increment(spec.law(j), t, rng);
            let z: f64 = StandardNormal.sample(rng);
            s.sqrt() * z
        })
        .collect())
}

/// Empirical characteristic function `mean of exp(i <z, x>)` over samples.
#[must_use]
pub fn empirical_char_function(samples: &[Vec<f64>], z: &[f64]) -> Complex64 {
    assert!(!samples.is_empty(), "need at least one sample");
    let mut acc = Complex64::new(0.0, 0.0);
    for x in samples {
        assert_eq!(x.len(), z.len(), "sample dimension mismatch");
        let phase: f64 = x.iter().zip(z).map(|(&a, &b)| a * b).sum();
        acc += Complex64::new(phase.cos(), phase.sin());
    }
    acc / samples.len() as f64
}

/// Closed-form characteristic function modulus for all-stable clocks:
/// `|E exp(i <z, L(t)>)| = prod_j exp(-t (z_j^2 / 2)^{alpha_j / 2})`,
/// by conditioning coordinate `j` on its clock and using the Laplace
/// exponent `u^{alpha_j / 2}` at `u = z_j^2 / 2`.
pub fn char_function_modulus_closed_form(
    laws: &[CoordinateLaw],
    t: f64,
    z: &[f64],
) -> Result<f64> {
    if laws.len() != z.len() {
        return Err(Error::Spec(format!(
            "argument dimension {} does not match clock dimension {}",
            z.len(),
            laws.len()
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    let mut exponent = 0.0;
    for (law, &zj) in laws.iter().zip(z) {
        match *law {
            CoordinateLaw::Stable { alpha } => {
                exponent += (zj * zj / 2.0).powf(alpha / 2.0);
            }
            _ => {
                return Err(Error::Domain(
                    "closed-form characteristic modulus is available only for stable clocks"
                        .into(),
                ));
            }
        }
    }
    Ok((-t * exponent).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::{sample_variance, MeanSe};

    #[test]
    fn drift_clock_gives_plain_gaussian() {
        // drift:1 clock makes L(1) = W(1) exactly.
        let spec = SubordinatorSpec::homogeneous(
            CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: 1.0 },
            1,
        )
        .unwrap();
        let n = 20_000;
        let mut rng = substream(21, 0);
        let draws: Vec<f64> = (0..n)
            .map(|_| levy_terminal(&spec, 1.0, &mut rng).unwrap()[0])
            .collect();
        let m = MeanSe::from_samples(&draws);
        assert!(m.mean.abs() < 3.0 * m.se, "mean {} se {}", m.mean, m.se);
        let var = sample_variance(&draws);
        let var_tol = 3.0 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 1.0).abs() < var_tol, "variance {var}");
    }

    #[test]
    fn coordinates_are_sign_uncorrelated() {
        // Stable marginals have infinite variance, so correlate signs
        // instead of values.
        let spec =
            SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.2 }, 2).unwrap();
        let n = 20_000;
        let mut rng = substream(22, 0);
        let prods: Vec<f64> = (0..n)
            .map(|_| {
                let x = levy_terminal(&spec, 1.0, &mut rng).unwrap();
                x[0].signum() * x[1].signum()
            })
            .collect();
        let m = MeanSe::from_samples(&prods);
        assert!(m.mean.abs() < 3.0 * m.se, "sign correlation {}", m.mean);
    }

    #[test]
    fn empirical_char_function_matches_closed_form() {
        let spec =
            SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.5 }, 2).unwrap();
        let t = 0.7;
        let z = [0.8, -0.4];
        let n = 20_000;
        let mut rng = substream(23, 0);
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| levy_terminal(&spec, t, &mut rng).unwrap())
            .collect();
        let phi_hat = empirical_char_function(&samples, &z);
        let phi = char_function_modulus_closed_form(spec.laws(), t, &z).unwrap();
        // Each summand has modulus one, so both parts have se below
        // 1 / sqrt(n).
        let tol = 4.0 * (2.0 / n as f64).sqrt();
        assert!(
            (phi_hat - Complex64::new(phi, 0.0)).norm() < tol,
            "empirical {phi_hat} vs closed form {phi}"
        );
    }

    #[test]
    fn path_terminals_have_the_same_law() {
        // The grid does not discretise the Brownian layer, so path terminals
        // reproduce the closed-form characteristic function too.
        let spec =
            SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.5 }, 1).unwrap();
        let t = 1.0;
        let z = [0.9];
        let n = 4000;
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut rng = substream(24, i as u64);
                let (_, path) = levy_path(&spec, t, 8, &mut rng).unwrap();
                path.terminal().to_vec()
            })
            .collect();
        let phi_hat = empirical_char_function(&samples, &z);
        let phi = char_function_modulus_closed_form(spec.laws(), t, &z).unwrap();
        let tol = 4.0 * (2.0 / n as f64).sqrt();
        assert!(
            (phi_hat - Complex64::new(phi, 0.0)).norm() < tol,
            "empirical {phi_hat} vs closed form {phi}"
        );
    }

    #[test]
    fn levy_path_is_reproducible_and_well_shaped() {
        let spec = SubordinatorSpec::new(vec![
            CoordinateLaw::Stable { alpha: 1.5 },
            CoordinateLaw::Gamma { shape: 2.0, rate: 1.0 },
        ])
        .unwrap();
        let run = || {
            let mut rng = substream(25, 3);
            levy_path(&spec, 2.0, 16, &mut rng).unwrap()
        };
        let (ell_a, path_a) = run();
        let (ell_b, path_b) = run();
        assert_eq!(ell_a, ell_b);
        assert_eq!(path_a, path_b);
        assert_eq!(path_a.grid().len(), 17);
        assert_eq!(path_a.dim(), 2);
        assert_eq!(path_a.states()[0], vec![0.0, 0.0]);
        let csv = path_a.to_csv();
        assert!(csv.starts_with("t,L_1,L_2\n"));
        assert_eq!(csv.lines().count(), 18);
    }

    #[test]
    fn closed_form_rejects_non_stable_laws() {
        let laws = [CoordinateLaw::Gamma { shape: 1.0, rate: 1.0 }];
        assert!(char_function_modulus_closed_form(&laws, 1.0, &[0.5]).is_err());
    }
}
