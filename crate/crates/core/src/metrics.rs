//! Monte Carlo sliced Wasserstein estimators, used for evaluation only.

use ndarray::{ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{project, sample_sphere};
use crate::ot1d::{wasserstein2_squared, QuantileTable};
use crate::rng::{self, Role};
use crate::{Error, Result};

pub const DEFAULT_EVAL_PROJECTIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub n_theta_eval: usize,
    /// Smoothing std; 0 gives the plain sliced distance.
    pub sigma_eval: f64,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            n_theta_eval: DEFAULT_EVAL_PROJECTIONS,
            sigma_eval: 0.0,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta_eval == 0 {
            return Err(Error::invalid("n_theta_eval must be >= 1"));
        }
        if !(self.sigma_eval >= 0.0 && self.sigma_eval.is_finite()) {
            return Err(Error::invalid(format!("sigma_eval must be >= 0, got {}", self.sigma_eval)));
        }
        Ok(())
    }
}

/// Squared 2-Wasserstein distance between two 1D samples (quantile coupling).
pub fn w2_squared_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(wasserstein2_squared(&QuantileTable::new(a)?, &QuantileTable::new(b)?))
}

/// Monte Carlo estimate of the (optionally Gaussian-smoothed) sliced 2-Wasserstein distance.
///
/// Smoothing noise for a sample set is keyed to the set's content, so swapping
/// the arguments gives the same value bit for bit.
pub fn sliced_w2(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, config: &MetricConfig) -> Result<f64> {
    config.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "sample sets have dimensions {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 || b.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid("sample sets must be non-empty"));
    }
    let d = a.ncols();
    let directions = sample_sphere(d, config.n_theta_eval, rng::derive(config.seed, Role::EvalDirections, 0, 0))?;
    let pa = project(a, &directions)?;
    let pb = project(b, &directions)?;
    let fa = fingerprint(a);
    let fb = fingerprint(b);
    let sigma = config.sigma_eval;

    let smoothed = |col: ndarray::ArrayView1<'_, f64>, key: u64, j: usize| -> Vec<f64> {
        if sigma == 0.0 {
            return col.to_vec();
        }
        let mut rng = rng::stream(config.seed, Role::EvalNoise, key, j as u64);
        col.iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let per_direction: Vec<f64> = (0..directions.len())
        .into_par_iter()
        .map(|j| {
            let ta = QuantileTable::from_vec(smoothed(pa.column(j), fa, j))?;
            let tb = QuantileTable::from_vec(smoothed(pb.column(j), fb, j))?;
            Ok(wasserstein2_squared(&ta, &tb))
        })
        .collect::<Result<_>>()?;
    let mean = per_direction.iter().sum::<f64>() / per_direction.len() as f64;
    Ok(mean.sqrt())
}

fn fingerprint(m: ArrayView2<'_, f64>) -> u64 {
    let mut words = vec![m.nrows() as u64, m.ncols() as u64];
    for row in m.axis_iter(Axis(0)) {
        words.push(rng::fingerprint(&row.to_vec()));
    }
    rng::mix(&words)
}
