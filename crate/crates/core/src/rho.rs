//! Calculus for one-sided drift moduli.
//!
//! A modulus is a continuous non-decreasing function `rho` on `[0, inf)`,
//! positive on `(0, inf)`, of at most linear growth. The quantities built
//! here from `rho` drive everything downstream:
//!
//! * `G(r) = integral_1^r du / rho(u)`, strictly increasing, `G(1) = 0`;
//! * its inverse `G^{-1}`;
//! * the growth envelope `Gamma(t, r) = r + t * rho(G^{-1}(G(r) + t))`,
//!   which dominates solutions of `f' = rho(f)` started at `r`;
//! * the Bihari comparison bound `G^{-1}(G(f0) + t)` for scalar inequalities
//!   `f(t) <= f0 + integral_0^t rho(f(s)) ds`.
//!
//! For a linear modulus `rho(r) = c0 * r` the envelope has the closed form
//! `Gamma(t, r) = (c0 * t * exp(c0 * t) + 1) * r`, used as an oracle in the
//! test suite. A modulus whose integral `G` diverges at zero (an Osgood
//! modulus) makes the Bihari bound vanish for `f0 = 0`; that is the uniqueness
//! mechanism the coupling relies on.
//!
//! `G` is evaluated by adaptive Simpson quadrature after the substitution
//! `u = exp(s)`, which removes the `1/u` singular scale near zero and turns
//! the linear and Osgood integrands into constants or mildly varying smooth
//! functions. Inversion is by bisection on a bracket grown geometrically from
//! `[1e-12, 1]`.

use crate::error::{Error, Result};
use std::fmt;

/// Absolute tolerance for the adaptive quadrature behind `g_rho`.
const QUAD_TOL: f64 = 1e-10;

/// Relative bracket width at which bisection stops.
const BISECT_REL_WIDTH: f64 = 1e-12;

/// Initial bisection bracket for `g_rho_inverse`.
const BRACKET_LO: f64 = 1e-12;
const BRACKET_HI: f64 = 1.0;

/// A drift modulus from the admissible class.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoModulus {
    /// `rho(r) = c0 * r` with `c0 > 0`.
    Linear { c0: f64 },
    /// `rho(r) = r * (1 - ln r)` for `r <= 1`, `rho(r) = r` beyond; the
    /// built-in non-Lipschitz Osgood modulus.
    Osgood,
    /// Piecewise-linear interpolation of a strictly increasing grid of
    /// `(r, rho(r))` pairs; constant below the first knot, extended with the
    /// final segment slope beyond the last. Whether the interpolated modulus
    /// is Osgood cannot be decided from finitely many points, so that
    /// property is carried as an unverified assumption.
    Tabulated {
        rs: Vec<f64>,
        values: Vec<f64>,
        /// Set when the table was accepted on the caller's word that the
        /// underlying modulus is Osgood; reports should surface it.
        osgood_assumed: bool,
    },
}

impl RhoModulus {
    /// Linear modulus `rho(r) = c0 * r`.
    pub fn linear(c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::Domain(format!(
                "linear modulus needs a finite slope c0 > 0, got {c0}"
            )));
        }
        Ok(Self::Linear { c0 })
    }

    /// The built-in Osgood modulus `r (1 - ln r)` capped to `r` above one.
    #[must_use]
    pub fn osgood() -> Self {
        Self::Osgood
    }

    /// Tabulated modulus from `(r, rho(r))` pairs.
    ///
    /// Requires at least two points, strictly increasing radii starting above
    /// zero, and positive non-decreasing values.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Spec(
                "tabulated modulus needs at least two grid points".into(),
            ));
        }
        for (i, &(r, v)) in points.iter().enumerate() {
            if !(r > 0.0 && r.is_finite() && v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!(
                    "tabulated modulus point {i} must have finite r > 0 and value > 0, got ({r}, {v})"
                )));
            }
            if i > 0 {
                if r <= points[i - 1].0 {
                    return Err(Error::Spec(format!(
                        "tabulated modulus radii must increase strictly, point {i} has r = {r}"
                    )));
                }
                if v < points[i - 1].1 {
                    return Err(Error::Spec(format!(
                        "tabulated modulus values must be non-decreasing, point {i} has value {v}"
                    )));
                }
            }
        }
        Ok(Self::Tabulated {
            rs: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
            osgood_assumed: true,
        })
    }

    /// Evaluates the modulus at `r >= 0`.
    #[must_use]
    pub fn eval(&self, r: f64) -> f64 {
        assert!(r >= 0.0 && !r.is_nan(), "modulus evaluated at r = {r}");
        match self {
            Self::Linear { c0 } => c0 * r,
            Self::Osgood => {
                if r == 0.0 {
                    0.0
                } else if r <= 1.0 {
                    r * (1.0 - r.ln())
                } else {
                    r
                }
            }
            Self::Tabulated { rs, values, .. } => {
                let n = rs.len();
                if r <= rs[0] {
                    values[0]
                } else if r >= rs[n - 1] {
                    let slope = ((values[n - 1] - values[n - 2]) / (rs[n - 1] - rs[n - 2])).max(0.0);
                    values[n - 1] + slope * (r - rs[n - 1])
                } else {
                    let k = rs.partition_point(|&x| x < r);
                    let w = (r - rs[k - 1]) / (rs[k] - rs[k - 1]);
                    values[k - 1] * (1.0 - w) + values[k] * w
                }
            }
        }
    }

    /// True when the Osgood property is known rather than assumed.
    #[must_use]
    pub fn osgood_verified(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    /// Parses a modulus descriptor: `linear:<c0>`, `osgood`, or
    /// `table:<path>` where the file holds `r,value` lines (blank lines and
    /// `#` comments ignored).
    pub fn parse(descriptor: &str) -> Result<Self> {
        if descriptor == "osgood" {
            return Ok(Self::Osgood);
        }
        if let Some(arg) = descriptor.strip_prefix("linear:") {
            let c0: f64 = arg
                .parse()
                .map_err(|_| Error::Spec(format!("bad slope in modulus descriptor {descriptor:?}")))?;
            return Self::linear(c0);
        }
        if let Some(path) = descriptor.strip_prefix("table:") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Spec(format!("cannot read modulus table {path:?}: {e}")))?;
            let mut points = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut cols = line.split(',');
                let bad = || {
                    Error::Spec(format!(
                        "modulus table {path:?} line {}: expected `r,value`",
                        lineno + 1
                    ))
                };
                let r: f64 = cols.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
                let v: f64 = cols.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
                points.push((r, v));
            }
            return Self::tabulated(&points);
        }
        Err(Error::Spec(format!(
            "unknown modulus descriptor {descriptor:?}; expected linear:<c0>, osgood, or table:<path>"
        )))
    }
}

impl fmt::Display for RhoModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { c0 } => write!(f, "linear:{c0}"),
            Self::Osgood => write!(f, "osgood"),
            Self::Tabulated { rs, .. } => write!(f, "table[{} points]", rs.len()),
        }
    }
}

/// `G(r) = integral_1^r du / rho(u)` for `r > 0`.
///
/// Strictly increasing in `r` with `G(1) = 0` exactly.
pub fn g_rho(rho: &RhoModulus, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("g_rho needs finite r > 0, got {r}")));
    }
    // Substituted integrand: du / rho(u) with u = exp(s).
    let f = |s: f64| {
        let u = s.exp();
        u / rho.eval(u)
    };
    let b = r.ln();
    let value = if b >= 0.0 {
        simpson_adaptive(&f, 0.0, b, QUAD_TOL)
    } else {
        -simpson_adaptive(&f, b, 0.0, QUAD_TOL)
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "quadrature for G({r}) did not stay finite"
        )));
    }
    Ok(value)
}

/// Inverse of [`g_rho`] by bracketed bisection.
///
/// Values below the attainable range (possible when `1/rho` is integrable at
/// zero, e.g. for tabulated moduli) return the limit value `0`. Values above
/// the attainable range report a range error.
pub fn g_rho_inverse(rho: &RhoModulus, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("g_rho_inverse needs finite v, got {v}")));
    }
    let mut lo = BRACKET_LO;
    let mut hi = BRACKET_HI;
    let mut g_lo = g_rho(rho, lo)?;
    let mut g_hi = g_rho(rho, hi)?;
    // Grow the bracket upward by doubling until it straddles v.
    while g_hi < v {
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Range(format!(
                "g_rho_inverse target {v} above the attainable range of G"
            )));
        }
        g_hi = g_rho(rho, hi)?;
    }
    // Shrink downward likewise; hitting the representable floor means v lies
    // below G(0+), whose preimage limit is 0.
    while g_lo > v {
        hi = lo;
        g_hi = g_lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
        g_lo = g_rho(rho, lo)?;
    }
    debug_assert!(g_lo <= v && v <= g_hi);
    let mut iter = 0;
    while hi - lo > BISECT_REL_WIDTH * hi && iter < 2000 {
        let mid = 0.5 * (lo + hi);
        if g_rho(rho, mid)? < v {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// Growth envelope `Gamma(t, r) = r + t * rho(G^{-1}(G(r) + t))` for
/// `t, r >= 0`, with the continuity convention `Gamma(t, 0) = 0`.
pub fn gamma_rho(rho: &RhoModulus, t: f64, r: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("gamma_rho needs finite t >= 0, got {t}")));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("gamma_rho needs finite r >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(r);
    }
    let reached = g_rho_inverse(rho, g_rho(rho, r)? + t)?;
    Ok(r + t * rho.eval(reached))
}

/// Arguments of a Bihari comparison bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BihariBoundRequest {
    f0: f64,
    t: f64,
}

impl BihariBoundRequest {
    pub fn new(f0: f64, t: f64) -> Result<Self> {
        if !(f0 >= 0.0) || !f0.is_finite() {
            return Err(Error::Domain(format!(
                "Bihari bound needs finite f0 >= 0, got {f0}"
            )));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("Bihari bound needs finite t >= 0, got {t}")));
        }
        Ok(Self { f0, t })
    }

    #[must_use]
    pub fn f0(&self) -> f64 {
        self.f0
    }

    #[must_use]
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Bihari bound `G^{-1}(G(f0) + t)`: every continuous `f` with
/// `f(t) <= f0 + integral_0^t rho(f(s)) ds` stays below it.
///
/// For an Osgood modulus `G(0+) = -inf`, so `f0 = 0` forces the bound (and
/// hence `f`) to vanish identically; that case returns `0` directly.
pub fn bihari_bound(rho: &RhoModulus, request: BihariBoundRequest) -> Result<f64> {
    if request.f0 == 0.0 {
        return Ok(0.0);
    }
    g_rho_inverse(rho, g_rho(rho, request.f0)? + request.t)
}

/// Adaptive Simpson quadrature on `[a, b]`, `a <= b`, to absolute tolerance
/// `tol`; the classical recursion with the `|S2 - S1| / 15` error surrogate.
fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Closed form of G for the built-in Osgood modulus, derived by the
    /// substitution w = 1 - ln u on (0, 1]: G(r) = -ln(1 - ln r) there, and
    /// G(r) = ln r above one. Serves as an independent oracle for the
    /// quadrature route.
    fn osgood_g_closed(r: f64) -> f64 {
        if r <= 1.0 {
            -(1.0 - r.ln()).ln()
        } else {
            r.ln()
        }
    }

    #[test]
    fn g_linear_matches_logarithm() {
        let rho = RhoModulus::linear(1.0).unwrap();
        assert_eq!(g_rho(&rho, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            g_rho(&rho, std::f64::consts::E).unwrap(),
            1.0,
            max_relative = 1e-10
        );
        // integral_1^4 du / (2u) = ln(4) / 2 = ln(2).
        let rho2 = RhoModulus::linear(2.0).unwrap();
        assert_relative_eq!(
            g_rho(&rho2, 4.0).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-9
        );
    }

    #[test]
    fn g_osgood_matches_closed_form() {
        let rho = RhoModulus::osgood();
        for &r in &[1e-6, 1e-3, 0.1, 0.5, 0.99, 1.0, 1.5, 10.0, 1e4] {
            assert_relative_eq!(
                g_rho(&rho, r).unwrap(),
                osgood_g_closed(r),
                max_relative = 1e-8,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn g_is_strictly_increasing() {
        for rho in [RhoModulus::linear(0.7).unwrap(), RhoModulus::osgood()] {
            let mut prev = f64::NEG_INFINITY;
            for &r in &[1e-4, 1e-2, 0.5, 1.0, 2.0, 8.0, 64.0] {
                let g = g_rho(&rho, r).unwrap();
                assert!(g > prev, "G not increasing for {rho} at r = {r}");
                prev = g;
            }
        }
    }

    #[test]
    fn g_rejects_non_positive_radius() {
        let rho = RhoModulus::linear(1.0).unwrap();
        assert!(matches!(g_rho(&rho, 0.0), Err(Error::Domain(_))));
        assert!(matches!(g_rho(&rho, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_round_trips() {
        for rho in [
            RhoModulus::linear(1.0).unwrap(),
            RhoModulus::linear(2.0).unwrap(),
            RhoModulus::osgood(),
        ] {
            for &r in &[1e-6, 1e-3, 0.25, 1.0, 3.0, 1e2, 1e6] {
                let v = g_rho(&rho, r).unwrap();
                let back = g_rho_inverse(&rho, v).unwrap();
                assert_relative_eq!(back, r, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn inverse_of_linear_hits_exponential() {
        let rho = RhoModulus::linear(1.0).unwrap();
        assert_relative_eq!(
            g_rho_inverse(&rho, 1.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-10
        );
    }

    #[test]
    fn inverse_below_range_returns_zero_limit() {
        // Constant extension below the first knot makes 1/rho integrable at
        // zero, so G(0+) is finite and sufficiently negative targets fall
        // below the attainable range.
        let rho = RhoModulus::tabulated(&[(0.5, 1.0), (2.0, 2.0)]).unwrap();
        let g_floor = g_rho(&rho, 1e-9).unwrap();
        assert_eq!(g_rho_inverse(&rho, g_floor - 10.0).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_interpolates_and_extends() {
        let rho = RhoModulus::tabulated(&[(1.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(rho.eval(0.5), 1.0);
        assert_eq!(rho.eval(1.5), 2.0);
        assert_eq!(rho.eval(3.0), 5.0);
        assert!(!rho.osgood_verified());
    }

    #[test]
    fn tabulated_rejects_bad_grids() {
        assert!(RhoModulus::tabulated(&[(1.0, 1.0)]).is_err());
        assert!(RhoModulus::tabulated(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(RhoModulus::tabulated(&[(1.0, 2.0), (2.0, 1.0)]).is_err());
        assert!(RhoModulus::tabulated(&[(0.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn gamma_linear_closed_form() {
        // Gamma(t, r) = (c0 t e^{c0 t} + 1) r for the linear modulus.
        let rho = RhoModulus::linear(1.0).unwrap();
        let expect = 2.0 * (std::f64::consts::E + 1.0);
        assert_relative_eq!(gamma_rho(&rho, 1.0, 2.0).unwrap(), expect, max_relative = 1e-8);

        let rho_half = RhoModulus::linear(0.5).unwrap();
        assert_relative_eq!(
            gamma_rho(&rho_half, 2.0, 1.0).unwrap(),
            std::f64::consts::E + 1.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn gamma_boundary_conventions() {
        let rho = RhoModulus::osgood();
        assert_eq!(gamma_rho(&rho, 5.0, 0.0).unwrap(), 0.0);
        assert_eq!(gamma_rho(&rho, 0.0, 3.0).unwrap(), 3.0);
    }

    #[test]
    fn gamma_monotone_in_both_arguments() {
        let rho = RhoModulus::osgood();
        let mut prev = 0.0;
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            let g = gamma_rho(&rho, t, 0.3).unwrap();
            assert!(g > prev);
            prev = g;
        }
        prev = 0.0;
        for &r in &[0.1, 0.5, 1.0, 2.0] {
            let g = gamma_rho(&rho, 1.0, r).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn bihari_matches_exponential_growth() {
        // rho = linear(3), f0 = 2: bound is 2 e^{3t}.
        let rho = RhoModulus::linear(3.0).unwrap();
        let req = BihariBoundRequest::new(2.0, 0.5).unwrap();
        assert_relative_eq!(
            bihari_bound(&rho, req).unwrap(),
            2.0 * 1.5f64.exp(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn bihari_zero_start_stays_zero() {
        for rho in [RhoModulus::linear(1.0).unwrap(), RhoModulus::osgood()] {
            let req = BihariBoundRequest::new(0.0, 2.0).unwrap();
            assert_eq!(bihari_bound(&rho, req).unwrap(), 0.0);
        }
    }

    #[test]
    fn request_validates_inputs() {
        assert!(BihariBoundRequest::new(-1.0, 0.0).is_err());
        assert!(BihariBoundRequest::new(1.0, -0.5).is_err());
        assert!(BihariBoundRequest::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn descriptors_parse() {
        assert_eq!(
            RhoModulus::parse("linear:1.5").unwrap(),
            RhoModulus::Linear { c0: 1.5 }
        );
        assert_eq!(RhoModulus::parse("osgood").unwrap(), RhoModulus::Osgood);
        assert!(RhoModulus::parse("linear:-2").is_err());
        assert!(RhoModulus::parse("cubic").is_err());
    }
}
