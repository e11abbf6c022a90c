//! Random clocks and the subordinated Brownian motion they drive.
//!
//! A `d`-dimensional subordinator realisation is stored as a [`ClockPath`]:
//! per-coordinate non-decreasing values on a shared time grid. The driving
//! noise `L_j(t) = W_j(l_j(t))` evaluates `d` independent Brownian motions at
//! clock times through a [`BrownianStore`], which samples lazily and refines
//! between already-drawn points by Brownian bridging, so a path stays
//! consistent no matter in which order times are queried.
//!
//! [`regularize_clock`] produces the absolutely continuous, strictly
//! increasing surrogate `l^n(t) = n * integral_t^{t+1/n} l(s) ds + t / n`
//! that the coupling construction needs; it decreases pointwise to `l` as
//! `n` grows and never falls below it.

mod brownian;
mod clock;
mod levy;
mod moments;
mod subordinator;

pub use brownian::BrownianStore;
pub use clock::{regularize_clock, ClockInterpolation, ClockPath};
pub use levy::{char_function_modulus_closed_form, empirical_char_function, levy_path, levy_terminal, LevyPath};
pub use moments::{exp_inverse_moment, inverse_moment, inverse_moment_analytic};
pub use subordinator::{CoordinateLaw, SubordinatorSpec, sample_subordinator, sample_terminal};
