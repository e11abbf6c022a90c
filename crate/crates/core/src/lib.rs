//! Numerical laboratory for SDEs driven by anisotropic subordinated
//! Brownian motions.
//!
//! The library builds up, layer by layer, everything needed to exercise a
//! coupling-by-reflection argument with per-coordinate random clocks and to
//! check the dimension-free Harnack-type inequalities it yields:
//!
//! * [`rho`]: scalar calculus for one-sided drift moduli (the integral
//!   transform `G`, its inverse, the growth envelope `Gamma`, Bihari-type
//!   comparison bounds),
//! * [`paths`]: subordinator clocks, a lazily-refined Brownian store, and the
//!   subordinated process `L_j(t) = W_j(l_j(t))` with its moment oracles,
//! * [`sde`]: drift specifications, the one-sided condition validator, and
//!   Euler solvers for fixed or freshly sampled clocks,
//! * [`coupling`]: the forced-drift coupling with sticky meeting, its
//!   Girsanov weight and per-batch diagnostics,
//! * [`harnack`]: Monte Carlo verdicts for log- and power-Harnack
//!   inequalities and the variance-based gradient estimate,
//! * [`rng`]: bit-stable substream derivation shared by all estimators.

pub mod coupling;
pub mod error;
pub mod harnack;
pub mod paths;
pub mod rho;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
