//! Distributional checks for the clock and solver layers: terminal clock
//! laws against closed-form distribution functions, weak convergence of the
//! Euler scheme, and noise reuse through the shared Brownian store.

use harnack_core::paths::{
    sample_subordinator, sample_terminal, BrownianStore, CoordinateLaw, SubordinatorSpec,
};
use harnack_core::rho::RhoModulus;
use harnack_core::rng::{child_seed, fork, substream};
use harnack_core::sde::{solve_conditional, solve_unconditional, DriftSpec};
use harnack_core::stats::MeanSe;
use statrs::function::erf::erfc;

const SEED: u64 = 0x7e57_0a75;

/// Kolmogorov-Smirnov distance between sorted samples and a CDF.
fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &s) in sorted.iter().enumerate() {
        let f = cdf(s);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        worst = worst.max((f - lo).abs()).max((hi - f).abs());
    }
    worst
}

#[test]
fn stable_half_clock_matches_its_distribution_function() {
    // The alpha = 1 descriptor subordinates by the 1/2-stable clock, whose
    // terminal law at horizon t has the closed distribution function
    // erfc(t / (2 sqrt(s))).
    let spec = SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.0 }, 1).unwrap();
    let n = 10_000usize;
    let mut rng = substream(child_seed(SEED, "ks"), 0);
    let mut draws: Vec<f64> = (0..n)
        .map(|_| sample_terminal(&spec, 1.0, &mut rng).unwrap()[0])
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d = ks_statistic(&draws, |s| erfc(1.0 / (2.0 * s.sqrt())));
    let scaled = d * (n as f64).sqrt();
    assert!(
        scaled < 2.0,
        "KS distance {d:.5} (sqrt(n)-scaled {scaled:.3}) rejects the 1/2-stable law"
    );
}

#[test]
fn ou_terminal_mean_matches_the_flow() {
    // The noise term is a martingale, so the terminal mean must follow the
    // deterministic flow regardless of the clock.
    let lambda = 0.8;
    let rho = RhoModulus::linear(1.0).unwrap();
    let b = DriftSpec::parse(&format!("ou:{lambda}"), 1, rho).unwrap();
    let spec = SubordinatorSpec::homogeneous(
        CoordinateLaw::CompoundPoisson { rate: 0.0, jump_mean: 1.0, drift: 1.0 },
        1,
    )
    .unwrap();
    let x0 = [1.0];
    let n = 4000usize;
    let seed = child_seed(SEED, "ou-mean");
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            solve_unconditional(&b, &x0, &spec, 1.0, 400, &mut rng).unwrap()[0]
        })
        .collect();
    let est = MeanSe::from_samples(&vals);
    let want = (-lambda as f64).exp();
    // Four standard errors plus a first-order step-size allowance.
    let tol = 4.0 * est.se + 5e-3;
    assert!(
        (est.mean - want).abs() < tol,
        "terminal mean {:.4} +- {:.4} against flow value {want:.4}",
        est.mean,
        est.se
    );
}

#[test]
fn zero_drift_second_moment_equals_expected_clock_mass() {
    // X(T) = W(S(T)) for zero drift, so E X(T)^2 = E S(T); a gamma clock
    // with shape 2 and rate 1 has mean 2 at the unit horizon.
    let rho = RhoModulus::linear(1.0).unwrap();
    let b = DriftSpec::parse("zero", 1, rho).unwrap();
    let spec =
        SubordinatorSpec::homogeneous(CoordinateLaw::Gamma { shape: 2.0, rate: 1.0 }, 1).unwrap();
    let n = 4000usize;
    let seed = child_seed(SEED, "gamma-var");
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let xt = solve_unconditional(&b, &[0.0], &spec, 1.0, 300, &mut rng).unwrap()[0];
            xt * xt
        })
        .collect();
    let est = MeanSe::from_samples(&vals);
    assert!(
        (est.mean - 2.0).abs() < 4.0 * est.se,
        "second moment {:.3} +- {:.3} against clock mass 2",
        est.mean,
        est.se
    );
}

#[test]
fn shared_store_replays_identical_noise() {
    // Solving twice on the same clock through the same store must reuse the
    // memoised Brownian values bit for bit; a store built from different
    // randomness must not.
    let rho = RhoModulus::linear(1.0).unwrap();
    let b = DriftSpec::parse("ou:0.5", 2, rho).unwrap();
    let spec = SubordinatorSpec::homogeneous(CoordinateLaw::Stable { alpha: 1.5 }, 2).unwrap();
    let mut rng = substream(child_seed(SEED, "replay"), 0);
    let ell = sample_subordinator(&spec, 1.0, 200, &mut rng).unwrap();
    let x0 = [0.3, -0.2];

    let mut store = BrownianStore::new(2, fork(&mut rng));
    let first = solve_conditional(&b, &x0, &ell, &mut store).unwrap();
    let second = solve_conditional(&b, &x0, &ell, &mut store).unwrap();
    assert_eq!(first.states(), second.states(), "memoised noise was not replayed");

    let mut other = BrownianStore::new(2, fork(&mut rng));
    let third = solve_conditional(&b, &x0, &ell, &mut other).unwrap();
    assert_ne!(
        first.terminal(),
        third.terminal(),
        "independent stores produced identical paths"
    );
}
