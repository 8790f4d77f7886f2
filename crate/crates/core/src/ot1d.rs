//! Empirical one-dimensional optimal transport.
//!
//! Order statistics `s_1 <= ... <= s_m` are assigned plotting positions
//! `p_i = (i - 0.5) / m`. The CDF interpolates linearly between `(s_i, p_i)`
//! pairs, is 0 below the minimum and 1 above the maximum. The quantile
//! function is its generalised inverse and clamps to the extreme order
//! statistics outside `[p_1, p_m]`.

use crate::{Error, Result};

/// A sorted sample representing an empirical distribution on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    sorted: Vec<f64>,
}

impl QuantileTable {
    /// Sorts a copy of `samples`. Rejects empty input and non-finite values.
    pub fn new(samples: &[f64]) -> Result<Self> {
        Self::from_vec(samples.to_vec())
    }

    pub fn from_vec(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("quantile table needs at least one sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        samples.sort_by(f64::total_cmp);
        Ok(QuantileTable { sorted: samples })
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Interpolated empirical CDF at `z`.
    ///
    /// A value shared by a run of tied order statistics gets the mean of their
    /// plotting positions.
    pub fn cdf(&self, z: f64) -> f64 {
        let s = &self.sorted;
        let m = s.len() as f64;
        let below = s.partition_point(|&v| v < z);
        let at_or_below = below + s[below..].partition_point(|&v| v <= z);
        if at_or_below > below {
            // ranks below+1 ..= at_or_below (1-based)
            let mean_rank = (below + 1 + at_or_below) as f64 / 2.0;
            return (mean_rank - 0.5) / m;
        }
        if below == 0 {
            return 0.0;
        }
        if below == s.len() {
            return 1.0;
        }
        let (lo, hi) = (s[below - 1], s[below]);
        let p_lo = (below as f64 - 0.5) / m;
        p_lo + (z - lo) / (hi - lo) / m
    }

    /// Generalised inverse of [`cdf`](Self::cdf). `u` must lie in `[0, 1]`.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::invalid(format!(
                "quantile level {u} outside [0, 1]"
            )));
        }
        Ok(self.quantile(u))
    }

    /// Quantile for a level already known to be in `[0, 1]`.
    pub(crate) fn quantile(&self, u: f64) -> f64 {
        let s = &self.sorted;
        let m = s.len();
        let mf = m as f64;
        // 1-based fractional position of u among the plotting positions.
        let mut t = u * mf + 0.5;
        let nearest = t.round();
        if (t - nearest).abs() <= 1e-9 {
            t = nearest;
        }
        if t <= 1.0 {
            return s[0];
        }
        if t >= mf {
            return s[m - 1];
        }
        let i = t.floor();
        let frac = t - i;
        let i = i as usize;
        let (lo, hi) = (s[i - 1], s[i]);
        if frac == 0.0 {
            lo
        } else {
            lo + frac * (hi - lo)
        }
    }

    /// Derivative of the Kantorovich potential from `self` (source) to `target`
    /// at `z`: `z - F_target^{-1}(F_source(z))`.
    pub fn potential_derivative(&self, z: f64, target: &QuantileTable) -> f64 {
        z - target.quantile(self.cdf(z))
    }
}

pub fn build_quantile_table(samples: &[f64]) -> Result<QuantileTable> {
    QuantileTable::new(samples)
}

pub fn potential_derivative(z: f64, source: &QuantileTable, target: &QuantileTable) -> f64 {
    source.potential_derivative(z, target)
}

/// Squared 2-Wasserstein distance between two empirical measures via the
/// quantile coupling at `min(n, m)` levels `(k - 0.5) / L`.
pub fn wasserstein2_squared(a: &QuantileTable, b: &QuantileTable) -> f64 {
    let levels = a.len().min(b.len());
    let lf = levels as f64;
    (1..=levels)
        .map(|k| {
            let u = (k as f64 - 0.5) / lf;
            let diff = a.quantile(u) - b.quantile(u);
            diff * diff
        })
        .sum::<f64>()
        / lf
}
