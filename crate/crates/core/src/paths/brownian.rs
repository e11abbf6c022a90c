//! Lazily sampled Brownian motions with bridge refinement.
//!
//! One store holds `d` independent standard Brownian motions in intrinsic
//! time. Values are drawn on first query and memoised, so repeated queries
//! agree bit for bit. A query beyond all stored times extends the path by a
//! fresh Gaussian increment; a query between stored times fills in by the
//! Brownian bridge
//! `W(u) | W(a), W(b) ~ N(W(a) + (u-a)/(b-a) (W(b)-W(a)), (u-a)(b-u)/(b-a))`,
//! which keeps every finite-dimensional law exact regardless of query order.
//!
//! Given the generator seed, the realised path is a deterministic function
//! of the sequence of first-time queries; solvers that must share noise
//! (coupled pairs, finite-difference stencils) therefore share one store and
//! query identical clock times.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

/// Process-local source of store identities; never serialized, only used to
/// assert that two solution paths were driven by the same noise.
static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Memoised Brownian paths, one per coordinate, keyed by intrinsic time.
#[derive(Debug, Clone)]
pub struct BrownianStore {
    /// Keys are the IEEE-754 bit patterns of non-negative times; for
    /// same-sign floats the bit order equals the numeric order.
    coords: Vec<BTreeMap<u64, f64>>,
    rng: ChaCha12Rng,
    zero_noise: bool,
    id: u64,
}

impl BrownianStore {
    /// A store of `d` independent Brownian motions driven by `rng`.
    #[must_use]
    pub fn new(d: usize, rng: ChaCha12Rng) -> Self {
        assert!(d >= 1, "store needs at least one coordinate");
        let mut coords = Vec::with_capacity(d);
        for _ in 0..d {
            let mut m = BTreeMap::new();
            m.insert(0.0f64.to_bits(), 0.0);
            coords.push(m);
        }
        Self {
            coords,
            rng,
            zero_noise: false,
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Instance identity; a clone keeps the id because it replays the same
    /// realisation.
    #[must_use]
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Deterministic test hook: every query returns zero, so solvers driven
    /// by this store integrate pure drift.
    #[must_use]
    pub fn zero(d: usize, rng: ChaCha12Rng) -> Self {
        let mut s = Self::new(d, rng);
        s.zero_noise = true;
        s
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Number of memoised times in coordinate `j` (including the anchor at
    /// zero).
    #[must_use]
    pub fn stored_len(&self, j: usize) -> usize {
        self.coords[j].len()
    }

    /// `W_j(u)` for `u >= 0`, sampling and memoising on first use.
    pub fn value(&mut self, j: usize, u: f64) -> f64 {
        assert!(
            u >= 0.0 && u.is_finite(),
            "Brownian store queried at time {u}"
        );
        if self.zero_noise {
            return 0.0;
        }
        let key = u.to_bits();
        let map = &self.coords[j];
        if let Some(&w) = map.get(&key) {
            return w;
        }
        let prev = map
            .range(..key)
            .next_back()
            .map(|(&k, &w)| (f64::from_bits(k), w))
            .expect("anchor at time zero is always stored");
        let next = map
            .range(key..)
            .next()
            .map(|(&k, &w)| (f64::from_bits(k), w));
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let w = match next {
            None => {
                // Fresh increment past the frontier.
                prev.1 + (u - prev.0).sqrt() * z
            }
            Some((b, wb)) => {
                // Bridge between the surrounding stored times.
                let (a, wa) = prev;
                let span = b - a;
                let mean = wa + (wb - wa) * (u - a) / span;
                let sd = ((u - a) * (b - u) / span).sqrt();
                mean + sd * z
            }
        };
        self.coords[j].insert(key, w);
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::{sample_variance, MeanSe};

    #[test]
    fn memoisation_is_exact() {
        let mut store = BrownianStore::new(2, substream(5, 0));
        let a = store.value(0, 1.25);
        let b = store.value(1, 1.25);
        assert_eq!(store.value(0, 1.25), a);
        assert_eq!(store.value(1, 1.25), b);
        assert_ne!(a, b, "coordinates share a value only with probability 0");
        assert_eq!(store.value(0, 0.0), 0.0);
    }

    #[test]
    fn same_seed_same_query_order_reproduces() {
        let queries = [0.7, 0.2, 1.9, 0.9, 0.2];
        let run = || {
            let mut store = BrownianStore::new(1, substream(42, 7));
            queries.iter().map(|&u| store.value(0, u)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn terminal_variance_matches_time() {
        let u = 2.0;
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| BrownianStore::new(1, substream(99, i as u64)).value(0, u))
            .collect();
        let mean = MeanSe::from_samples(&samples);
        assert!(mean.mean.abs() <= 3.0 * mean.se, "mean {} se {}", mean.mean, mean.se);
        let var = sample_variance(&samples);
        // se of the sample variance of a Gaussian is var * sqrt(2 / (n-1)).
        let var_se = u * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - u).abs() <= 3.0 * var_se, "var {var} vs {u}");
    }

    /// Bridged value must have the conditional bridge distribution: with
    /// endpoints drawn first, W(0.5) given W(1) has mean W(1)/2 and
    /// variance 1/4.
    #[test]
    fn bridge_conditional_moments() {
        let n = 100_000;
        let mut residuals = Vec::with_capacity(n);
        for i in 0..n {
            let mut store = BrownianStore::new(1, substream(123, i as u64));
            let w1 = store.value(0, 1.0);
            let wmid = store.value(0, 0.5);
            residuals.push(wmid - 0.5 * w1);
        }
        let mean = MeanSe::from_samples(&residuals);
        assert!(mean.mean.abs() <= 3.0 * mean.se);
        let var = sample_variance(&residuals);
        let var_se = 0.25 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 0.25).abs() <= 3.0 * var_se, "bridge var {var}");
    }

    /// Refinement keeps earlier values intact and interleaves consistently:
    /// the path ordering of stored times is preserved under any query order.
    #[test]
    fn refinement_preserves_existing_values() {
        let mut store = BrownianStore::new(1, substream(3, 3));
        let w2 = store.value(0, 2.0);
        let w1 = store.value(0, 1.0);
        let w15 = store.value(0, 1.5);
        assert_eq!(store.value(0, 2.0), w2);
        assert_eq!(store.value(0, 1.0), w1);
        assert_eq!(store.value(0, 1.5), w15);
        assert_eq!(store.stored_len(0), 4);
    }

    #[test]
    fn zero_store_is_silent() {
        let mut store = BrownianStore::zero(3, substream(0, 0));
        assert_eq!(store.value(2, 5.0), 0.0);
        assert_eq!(store.value(0, 0.25), 0.0);
    }

    /// Increments over disjoint intervals must be independent; a correlation
    /// screen on (W(1), W(2) - W(1)) suffices to catch bridging mistakes.
    #[test]
    fn disjoint_increments_uncorrelated() {
        let n = 100_000;
        let mut prods = Vec::with_capacity(n);
        for i in 0..n {
            let mut store = BrownianStore::new(1, substream(77, i as u64));
            let w1 = store.value(0, 1.0);
            let w2 = store.value(0, 2.0);
            prods.push(w1 * (w2 - w1));
        }
        let est = MeanSe::from_samples(&prods);
        assert!(est.mean.abs() <= 3.0 * est.se, "cov {} se {}", est.mean, est.se);
    }
}
