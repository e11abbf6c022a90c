//! Small estimation helpers shared by the Monte Carlo layers.

/// Sample mean together with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    /// Standard error `s / sqrt(n)` with the unbiased sample variance `s^2`;
    /// zero for constant samples and for `n = 1`.
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    #[must_use]
    pub fn from_samples(xs: &[f64]) -> Self {
        assert!(!xs.is_empty(), "mean of an empty sample");
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0, n };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Mean and error of `log(mean)` by the delta method. Requires a strictly
    /// positive mean estimate.
    #[must_use]
    pub fn log(&self) -> MeanSe {
        assert!(
            self.mean > 0.0,
            "delta method for log of a non-positive mean estimate"
        );
        MeanSe {
            mean: self.mean.ln(),
            se: self.se / self.mean,
            n: self.n,
        }
    }
}

/// Unbiased sample variance (n - 1 in the denominator).
#[must_use]
pub fn sample_variance(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2, "variance of fewer than two samples");
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Empirical quantile with linear interpolation between order statistics.
#[must_use]
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0, 1]");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// l1 norm of a vector.
#[must_use]
pub fn norm_l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// l1 distance between two points of equal dimension.
#[must_use]
pub fn dist_l1(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "dimension mismatch in l1 distance");
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}
