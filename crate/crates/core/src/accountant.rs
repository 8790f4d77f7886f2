//! Privacy ledger and composition.
//!
//! Every release of noisy target projections is one [`MechanismEvent`]. Events
//! compose through Rényi differential privacy: a Gaussian release with
//! sensitivity `Delta` and noise `sigma` has Rényi divergence
//! `alpha * Delta^2 / (2 sigma^2)` at order `alpha`; orders add across events and
//! the total converts to `(epsilon, delta)` by minimising
//! `rdp(alpha) + ln(1/delta) / (alpha - 1)` over a fixed grid of orders.
//!
//! The diffusion step contracts total variation by
//! `gamma = min(1, sqrt(h / (2 lambda)))`, which scales each event's own `delta`.
//! Those amplified deltas are summed and reported next to the conversion delta,
//! never merged into it.

use serde::{Deserialize, Serialize};

use crate::mechanism::gaussian_constant;
use crate::{Error, Result};

/// Smallest and largest Rényi orders on the grid.
pub const ALPHA_MIN: f64 = 1.25;
pub const ALPHA_MAX: f64 = 512.0;
/// Geometric ratio between consecutive values of `alpha - 1` on the grid.
pub const ALPHA_RATIO: f64 = 1.05;

/// Rényi orders from 1.25 to 512 with `alpha - 1` growing by 5% per step.
pub fn alpha_grid() -> Vec<f64> {
    alpha_grid_with_ratio(ALPHA_RATIO)
}

pub fn alpha_grid_with_ratio(ratio: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut x = ALPHA_MIN - 1.0;
    while 1.0 + x < ALPHA_MAX {
        grid.push(1.0 + x);
        x *= ratio;
    }
    grid.push(ALPHA_MAX);
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismEvent {
    pub iteration: usize,
    pub sigma: f64,
    pub sensitivity: f64,
    pub delta_local: f64,
    #[serde(rename = "gamma")]
    pub amplification_gamma: f64,
}

impl MechanismEvent {
    pub fn new(
        iteration: usize,
        sigma: f64,
        sensitivity: f64,
        delta_local: f64,
        amplification_gamma: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("event sigma must be > 0, got {sigma}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::invalid(format!("event sensitivity must be > 0, got {sensitivity}")));
        }
        if !(delta_local > 0.0 && delta_local < 1.0) {
            return Err(Error::invalid(format!("event delta must lie in (0, 1), got {delta_local}")));
        }
        if !(amplification_gamma > 0.0 && amplification_gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "amplification gamma must lie in (0, 1], got {amplification_gamma}"
            )));
        }
        Ok(MechanismEvent {
            iteration,
            sigma,
            sensitivity,
            delta_local,
            amplification_gamma,
        })
    }

    /// Rényi divergence of order `alpha` for this release.
    pub fn rdp(&self, alpha: f64) -> f64 {
        alpha * self.sensitivity * self.sensitivity / (2.0 * self.sigma * self.sigma)
    }
}

/// Ordered record of target-touching releases.
///
/// Releases made without noise (`sigma = 0`) are counted separately; any such
/// release makes the composed epsilon infinite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    events: Vec<MechanismEvent>,
    unprotected_releases: usize,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, event: MechanismEvent) {
        self.events.push(event);
    }

    pub fn record_unprotected(&mut self) {
        self.unprotected_releases += 1;
    }

    pub fn events(&self) -> &[MechanismEvent] {
        &self.events
    }

    pub fn unprotected_releases(&self) -> usize {
        self.unprotected_releases
    }

    /// Number of target-touching releases, noisy or not.
    pub fn release_count(&self) -> usize {
        self.events.len() + self.unprotected_releases
    }

    pub fn compose(&self, target_delta: f64) -> Result<Composition> {
        compose(self, target_delta)
    }
}

/// Composed guarantee. `epsilon` is infinite when a noiseless release happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub epsilon: f64,
    /// The delta of the Rényi-to-(epsilon, delta) conversion.
    pub delta_rdp: f64,
    /// Sum over events of `gamma * delta_local`.
    pub delta_amplified_sum: f64,
    /// The minimising Rényi order, if any events were composed.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplification {
    pub gamma: f64,
    /// Set when `lambda = 0`: there is no diffusion, hence no amplification.
    pub degenerate: bool,
}

/// Total-variation contraction of the diffusion step, `min(1, sqrt(h / (2 lambda)))`.
pub fn amplification_gamma(h: f64, lambda: f64) -> Result<Amplification> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size must be > 0, got {h}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(Amplification {
            gamma: 1.0,
            degenerate: true,
        });
    }
    Ok(Amplification {
        gamma: (h / (2.0 * lambda)).sqrt().min(1.0),
        degenerate: false,
    })
}

/// Classical single-release epsilon, `sqrt(2 ln(1.25/delta)) * Delta / sigma`.
/// Returns infinity for `sigma = 0`.
pub fn per_event_epsilon(sigma: f64, sensitivity: f64, delta: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !(sensitivity > 0.0) {
        return Err(Error::invalid(format!(
            "need sigma >= 0 and sensitivity > 0 (got sigma={sigma}, sensitivity={sensitivity})"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(gaussian_constant(delta) * sensitivity / sigma)
}

pub fn compose(ledger: &PrivacyLedger, target_delta: f64) -> Result<Composition> {
    compose_on_grid(ledger, target_delta, &alpha_grid())
}

pub fn compose_on_grid(ledger: &PrivacyLedger, target_delta: f64, alphas: &[f64]) -> Result<Composition> {
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(Error::invalid(format!("target delta must lie in (0, 1), got {target_delta}")));
    }
    let delta_amplified_sum = ledger
        .events
        .iter()
        .map(|e| e.amplification_gamma * e.delta_local)
        .sum();
    if ledger.unprotected_releases > 0 {
        return Ok(Composition {
            epsilon: f64::INFINITY,
            delta_rdp: target_delta,
            delta_amplified_sum,
            alpha: None,
        });
    }
    if ledger.events.is_empty() {
        return Ok(Composition {
            epsilon: 0.0,
            delta_rdp: target_delta,
            delta_amplified_sum,
            alpha: None,
        });
    }
    // Sum of Delta^2 / (2 sigma^2); the Rényi divergence at alpha is alpha times this.
    let rho: f64 = ledger.events.iter().map(|e| e.rdp(1.0)).sum();
    let log_inv_delta = (1.0 / target_delta).ln();
    let (epsilon, alpha) = alphas
        .iter()
        .map(|&a| (a * rho + log_inv_delta / (a - 1.0), a))
        .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best });
    Ok(Composition {
        epsilon,
        delta_rdp: target_delta,
        delta_amplified_sum,
        alpha: Some(alpha),
    })
}

/// The serialised privacy report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub events: Vec<MechanismEvent>,
    /// `null` when unbounded (a noiseless release occurred).
    pub epsilon_total: Option<f64>,
    pub delta_rdp: f64,
    pub delta_amplified_sum: f64,
    pub config_echo: serde_json::Value,
}

impl PrivacyReport {
    pub fn new(ledger: &PrivacyLedger, target_delta: f64, config_echo: serde_json::Value) -> Result<Self> {
        let c = ledger.compose(target_delta)?;
        Ok(PrivacyReport {
            events: ledger.events.clone(),
            epsilon_total: c.epsilon.is_finite().then_some(c.epsilon),
            delta_rdp: c.delta_rdp,
            delta_amplified_sum: c.delta_amplified_sum,
            config_echo,
        })
    }
}
