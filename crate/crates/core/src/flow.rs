//! The particle flow engine.
//!
//! Each iteration projects the particles onto a set of directions, smooths the
//! projections with Gaussian noise, and moves every particle along the
//! direction-averaged one-dimensional transport displacement towards the
//! (noisy) projected target, followed by an Euler–Maruyama diffusion step:
//!
//! `x <- x + h * v(x) + sqrt(2 lambda h) * z`.
//!
//! Two variants differ in when directions are drawn:
//!
//! - [`Variant::Resampling`] draws fresh directions every iteration and therefore
//!   releases noisy target projections every iteration.
//! - [`Variant::Presampled`] draws `n_theta` directions and releases the noisy
//!   target projections once; later iterations only subsample `m_theta` of them
//!   and never touch the target again.

use std::borrow::Borrow;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{amplification_gamma, MechanismEvent, PrivacyLedger};
use crate::datagen::Dataset;
use crate::geometry::{project, sample_sphere, ProjectionSet};
use crate::mechanism::{l2_sensitivity, perturb, SensitivityMode, SmoothingParams};
use crate::ot1d::QuantileTable;
use crate::rng::{self, Role};
use crate::{Error, Result};

pub const DEFAULT_SNAPSHOTS: [usize; 5] = [0, 1, 10, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Resampling,
    Presampled,
}

/// Initial particle distribution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    #[default]
    StandardGaussian,
    UniformBall { radius: f64 },
}

fn default_delta() -> f64 {
    1e-5
}

fn default_norm_factor() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

/// Flow hyperparameters. Serialised with exactly these keys; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Step size.
    pub h: f64,
    /// Entropic regularisation weight; the diffusion std per step is `sqrt(2 lambda h)`.
    pub lambda: f64,
    /// Smoothing std of the projected measures. 0 runs the non-private flow.
    pub sigma: f64,
    pub n_theta: usize,
    /// Directions used per iteration by the presampled variant; defaults to `n_theta`.
    #[serde(default)]
    pub m_theta: Option<usize>,
    pub k_steps: usize,
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    /// Rescale drift rows to norm at most 1. Defaults to on exactly when `sigma > 0`.
    #[serde(default)]
    pub clip_drift: Option<bool>,
    #[serde(default)]
    pub init: Init,
    /// Number of particles; defaults to the number of target rows.
    #[serde(default)]
    pub n_particles: Option<usize>,
    /// Per-release delta used by the sensitivity bound and the Gaussian mechanism.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub sensitivity_mode: SensitivityMode,
    /// Bound on the distance between neighbouring rows (2 for unit-norm rows).
    #[serde(default = "default_norm_factor")]
    pub norm_factor: f64,
    /// Refuse to run with `sigma > 0` on rows that are not unit-normalised.
    #[serde(default = "default_true")]
    pub require_normalized: bool,
    /// Iterations at which particle snapshots are kept; the final iteration is always kept.
    #[serde(default)]
    pub snapshots: Option<Vec<usize>>,
}

impl FlowConfig {
    /// Settings of the 2D five-mode toy experiment.
    pub fn toy(sigma: f64, seed: u64) -> Self {
        FlowConfig {
            h: 1.0,
            lambda: 0.001,
            sigma,
            n_theta: 200,
            m_theta: None,
            k_steps: 200,
            variant: Variant::Resampling,
            seed,
            clip_drift: None,
            init: Init::StandardGaussian,
            n_particles: Some(1000),
            delta: default_delta(),
            sensitivity_mode: SensitivityMode::SqrtW,
            norm_factor: default_norm_factor(),
            require_normalized: false,
            snapshots: None,
        }
    }

    pub fn clip(&self) -> bool {
        self.clip_drift.unwrap_or(self.sigma > 0.0)
    }

    pub fn m_theta(&self) -> usize {
        self.m_theta.unwrap_or(self.n_theta)
    }

    /// Sorted, de-duplicated snapshot iterations, capped at `k_steps`, always ending at `k_steps`.
    pub fn snapshot_iterations(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .snapshots
            .clone()
            .unwrap_or_else(|| DEFAULT_SNAPSHOTS.to_vec())
            .into_iter()
            .filter(|&k| k <= self.k_steps)
            .collect();
        s.push(self.k_steps);
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::InvalidArgument(msg)) };
        check(self.h > 0.0 && self.h.is_finite(), format!("h must be > 0, got {}", self.h))?;
        check(self.lambda >= 0.0 && self.lambda.is_finite(), format!("lambda must be >= 0, got {}", self.lambda))?;
        check(self.sigma >= 0.0 && self.sigma.is_finite(), format!("sigma must be >= 0, got {}", self.sigma))?;
        check(self.n_theta >= 1, "n_theta must be >= 1".into())?;
        check(
            (1..=self.n_theta).contains(&self.m_theta()),
            format!("m_theta must lie in [1, n_theta], got {}", self.m_theta()),
        )?;
        check(self.k_steps >= 1, "k_steps must be >= 1".into())?;
        check(self.n_particles != Some(0), "n_particles must be >= 1".into())?;
        check(self.delta > 0.0 && self.delta < 1.0, format!("delta must lie in (0, 1), got {}", self.delta))?;
        check(self.norm_factor > 0.0 && self.norm_factor.is_finite(), "norm_factor must be > 0".into())?;
        if let Init::UniformBall { radius } = self.init {
            check(radius > 0.0 && radius.is_finite(), format!("init radius must be > 0, got {radius}"))?;
        }
        Ok(())
    }
}

/// Particle positions (`n x d`) at a given iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    positions: Array2<f64>,
    iteration: usize,
}

impl ParticleCloud {
    pub fn new(positions: Array2<f64>, iteration: usize) -> Result<Self> {
        if positions.nrows() == 0 || positions.ncols() == 0 {
            return Err(Error::invalid("particle cloud needs at least one particle and dimension"));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite particle coordinate at iteration {iteration}")));
        }
        Ok(ParticleCloud { positions, iteration })
    }

    pub fn positions(&self) -> ArrayView2<'_, f64> {
        self.positions.view()
    }

    pub fn into_positions(self) -> Array2<f64> {
        self.positions
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub snapshots: Vec<ParticleCloud>,
    pub final_cloud: ParticleCloud,
}

impl FlowTrajectory {
    pub fn snapshot(&self, iteration: usize) -> Option<&ParticleCloud> {
        self.snapshots.iter().find(|c| c.iteration == iteration)
    }
}

/// Per-particle smoothing noise: row `i` is drawn from the stream keyed by
/// `(seed, i)`, so a particle's noise depends only on its index.
fn particle_noise(n: usize, k: usize, smoothing: &SmoothingParams) -> Array2<f64> {
    let mut noise = Array2::zeros((n, k));
    noise
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut rng = rng::stream(smoothing.seed, Role::ParticleNoise, i as u64, 0);
            row.iter_mut()
                .for_each(|v| *v = smoothing.sigma * rng.sample::<f64, _>(StandardNormal));
        });
    noise
}

/// Monte Carlo drift estimate for every particle.
///
/// For direction `theta_j` the particle projections are smoothed with fresh
/// noise, turned into a source CDF, and each particle is displaced by
/// `F_target^{-1}(F_source(p)) - p` along `theta_j`; displacements are averaged
/// over directions. With `clip` set, rows are rescaled to norm at most 1.
pub fn drift<T: Borrow<QuantileTable> + Sync>(
    particles: ArrayView2<'_, f64>,
    target_tables: &[T],
    directions: &ProjectionSet,
    smoothing: &SmoothingParams,
    clip: bool,
) -> Result<Array2<f64>> {
    check_drift_shapes(particles, target_tables.len(), directions)?;
    let noise = if smoothing.sigma > 0.0 {
        Some(particle_noise(particles.nrows(), directions.len(), smoothing))
    } else {
        None
    };
    drift_inner(particles, target_tables, directions, noise.as_ref().map(|n| n.view()), clip)
}

/// [`drift`] with caller-supplied smoothing noise (`n x n_theta`, already scaled).
pub fn drift_with_noise<T: Borrow<QuantileTable> + Sync>(
    particles: ArrayView2<'_, f64>,
    target_tables: &[T],
    directions: &ProjectionSet,
    noise: ArrayView2<'_, f64>,
    clip: bool,
) -> Result<Array2<f64>> {
    check_drift_shapes(particles, target_tables.len(), directions)?;
    if noise.dim() != (particles.nrows(), directions.len()) {
        return Err(Error::invalid(format!(
            "noise has shape {:?}, expected ({}, {})",
            noise.dim(),
            particles.nrows(),
            directions.len()
        )));
    }
    drift_inner(particles, target_tables, directions, Some(noise), clip)
}

fn check_drift_shapes(particles: ArrayView2<'_, f64>, n_tables: usize, directions: &ProjectionSet) -> Result<()> {
    if n_tables != directions.len() {
        return Err(Error::invalid(format!(
            "{} target tables for {} directions",
            n_tables,
            directions.len()
        )));
    }
    if particles.ncols() != directions.dim() {
        return Err(Error::invalid(format!(
            "particles have dimension {} but directions have dimension {}",
            particles.ncols(),
            directions.dim()
        )));
    }
    if particles.nrows() == 0 {
        return Err(Error::invalid("no particles"));
    }
    Ok(())
}

fn drift_inner<T: Borrow<QuantileTable> + Sync>(
    particles: ArrayView2<'_, f64>,
    target_tables: &[T],
    directions: &ProjectionSet,
    noise: Option<ArrayView2<'_, f64>>,
    clip: bool,
) -> Result<Array2<f64>> {
    let (n, d) = particles.dim();
    let k = directions.len();
    let mut proj = project(particles, directions)?;
    if let Some(noise) = noise {
        proj += &noise;
    }

    // displacement[j][i]: move of particle i along direction j
    let displacement: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|j| {
            let col = proj.column(j);
            let source = QuantileTable::from_vec(col.to_vec())?;
            let target = target_tables[j].borrow();
            Ok(col
                .iter()
                .map(|&p| -source.potential_derivative(p, target))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Array2::<f64>::zeros((n, d));
    let kf = k as f64;
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, disp) in displacement.iter().enumerate() {
                let step = disp[i];
                Zip::from(&mut row)
                    .and(&directions.direction(j))
                    .for_each(|o, &t| *o += step * t);
            }
            row.mapv_inplace(|v| v / kf);
            if clip {
                let norm = row.dot(&row).sqrt();
                if norm > 1.0 {
                    row.mapv_inplace(|v| v / norm);
                }
            }
        });
    Ok(out)
}

/// One Euler–Maruyama step: `x + h * drift + sqrt(2 lambda h) * g`, with `g`
/// standard Gaussian per coordinate drawn from per-particle streams keyed by `seed`.
pub fn em_step(
    particles: &ParticleCloud,
    drift: ArrayView2<'_, f64>,
    h: f64,
    lambda: f64,
    seed: u64,
) -> Result<ParticleCloud> {
    let (n, d) = particles.positions.dim();
    let noise = if lambda > 0.0 {
        let mut g = Array2::zeros((n, d));
        g.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let mut rng = rng::stream(seed, Role::Diffusion, i as u64, 0);
                row.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
            });
        Some(g)
    } else {
        None
    };
    em_step_inner(particles, drift, h, lambda, noise.as_ref().map(|g| g.view()))
}

/// [`em_step`] with caller-supplied standard Gaussian increments (`n x d`).
pub fn em_step_with_noise(
    particles: &ParticleCloud,
    drift: ArrayView2<'_, f64>,
    h: f64,
    lambda: f64,
    gaussian: ArrayView2<'_, f64>,
) -> Result<ParticleCloud> {
    if gaussian.dim() != particles.positions.dim() {
        return Err(Error::invalid(format!(
            "diffusion noise has shape {:?}, expected {:?}",
            gaussian.dim(),
            particles.positions.dim()
        )));
    }
    em_step_inner(particles, drift, h, lambda, Some(gaussian))
}

fn em_step_inner(
    particles: &ParticleCloud,
    drift: ArrayView2<'_, f64>,
    h: f64,
    lambda: f64,
    gaussian: Option<ArrayView2<'_, f64>>,
) -> Result<ParticleCloud> {
    if drift.dim() != particles.positions.dim() {
        return Err(Error::invalid(format!(
            "drift has shape {:?}, expected {:?}",
            drift.dim(),
            particles.positions.dim()
        )));
    }
    if !(h > 0.0) || !(lambda >= 0.0) {
        return Err(Error::invalid(format!("need h > 0 and lambda >= 0 (h={h}, lambda={lambda})")));
    }
    let mut next = &particles.positions + &(&drift * h);
    if let (Some(g), true) = (gaussian, lambda > 0.0) {
        let scale = (2.0 * lambda * h).sqrt();
        Zip::from(&mut next).and(&g).for_each(|x, &z| *x += scale * z);
    }
    ParticleCloud::new(next, particles.iteration + 1)
}

fn initial_particles(n: usize, d: usize, init: Init, seed: u64) -> Result<ParticleCloud> {
    let mut rng = rng::stream(seed, Role::Init, 0, 0);
    let mut pos = Array2::<f64>::zeros((n, d));
    match init {
        Init::StandardGaussian => pos
            .iter_mut()
            .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal)),
        Init::UniformBall { radius } => {
            for mut row in pos.axis_iter_mut(Axis(0)) {
                loop {
                    row.iter_mut()
                        .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
                    let norm = row.dot(&row).sqrt();
                    if norm > 1e-12 {
                        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                        row.mapv_inplace(|v| v / norm * r);
                        break;
                    }
                }
            }
        }
    }
    ParticleCloud::new(pos, 0)
}

fn target_tables(noisy_projections: &Array2<f64>) -> Result<Vec<QuantileTable>> {
    noisy_projections
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| QuantileTable::from_vec(col.to_vec()))
        .collect()
}

/// A flow in progress: owns the particles and the ledger of target releases.
#[derive(Debug)]
pub struct Flow {
    config: FlowConfig,
    target: Array2<f64>,
    particles: ParticleCloud,
    ledger: PrivacyLedger,
    /// l2 sensitivity of one release, when `sigma > 0`.
    sensitivity: Option<f64>,
    gamma: f64,
    presampled: Option<(ProjectionSet, Vec<QuantileTable>)>,
}

impl Flow {
    pub fn new(target: &Dataset, config: &FlowConfig) -> Result<Self> {
        config.validate()?;
        let d = target.dim();
        let private = config.sigma > 0.0;
        if private && config.require_normalized && !target.normalized() {
            return Err(Error::Precondition(
                "private target rows must be normalised to unit norm (normalise the data or set require_normalized = false)".into(),
            ));
        }
        let sensitivity = if private {
            Some(l2_sensitivity(config.n_theta, config.delta, d, config.norm_factor, config.sensitivity_mode)?)
        } else {
            None
        };
        let gamma = amplification_gamma(config.h, config.lambda)?.gamma;
        let n = config.n_particles.unwrap_or(target.len());
        let particles = initial_particles(n, d, config.init, config.seed)?;
        let mut flow = Flow {
            config: config.clone(),
            target: target.rows().to_owned(),
            particles,
            ledger: PrivacyLedger::new(),
            sensitivity,
            gamma,
            presampled: None,
        };
        if config.variant == Variant::Presampled {
            let directions = sample_sphere(d, config.n_theta, rng::derive(config.seed, Role::Directions, 0, 0))?;
            let tables = flow.release_target(&directions, 0)?;
            flow.presampled = Some((directions, tables));
        }
        Ok(flow)
    }

    /// Projects the target, adds Gaussian noise, and records the release.
    fn release_target(&mut self, directions: &ProjectionSet, iteration: usize) -> Result<Vec<QuantileTable>> {
        let cfg = &self.config;
        let projected = project(self.target.view(), directions)?;
        let params = SmoothingParams::new(cfg.sigma, rng::derive(cfg.seed, Role::TargetNoise, iteration as u64, 0))?;
        let noisy = perturb(projected.view(), &params);
        match self.sensitivity {
            Some(s) => self
                .ledger
                .record(MechanismEvent::new(iteration, cfg.sigma, s, cfg.delta, self.gamma)?),
            None => self.ledger.record_unprotected(),
        }
        target_tables(&noisy)
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn particles(&self) -> &ParticleCloud {
        &self.particles
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    /// Runs one iteration with the flow's own diffusion noise.
    pub fn step(&mut self) -> Result<()> {
        self.step_with(None)
    }

    /// Runs one iteration. `gaussian`, when given, replaces the diffusion
    /// increments (`n x d` standard normals).
    pub fn step_with(&mut self, gaussian: Option<ArrayView2<'_, f64>>) -> Result<()> {
        let k = self.particles.iteration;
        let seed = self.config.seed;
        let smoothing = SmoothingParams::new(self.config.sigma, rng::derive(seed, Role::ParticleNoise, k as u64, 0))?;
        let clip = self.config.clip();
        let drift = match self.config.variant {
            Variant::Resampling => {
                let directions = sample_sphere(
                    self.particles.dim(),
                    self.config.n_theta,
                    rng::derive(seed, Role::Directions, k as u64, 0),
                )?;
                let tables = self.release_target(&directions, k)?;
                drift(self.particles.positions(), &tables, &directions, &smoothing, clip)?
            }
            Variant::Presampled => {
                let (all_dirs, all_tables) = self.presampled.as_ref().expect("presampled state");
                let m = self.config.m_theta();
                let mut idx = rand::seq::index::sample(
                    &mut rng::stream(seed, Role::Subsample, k as u64, 0),
                    all_dirs.len(),
                    m,
                )
                .into_vec();
                idx.sort_unstable();
                let directions = all_dirs.select(&idx);
                let tables: Vec<&QuantileTable> = idx.iter().map(|&j| &all_tables[j]).collect();
                drift(self.particles.positions(), &tables, &directions, &smoothing, clip)?
            }
        };
        let next = match gaussian {
            Some(g) => em_step_with_noise(&self.particles, drift.view(), self.config.h, self.config.lambda, g)?,
            None => em_step(
                &self.particles,
                drift.view(),
                self.config.h,
                self.config.lambda,
                rng::derive(seed, Role::Diffusion, k as u64, 0),
            )?,
        };
        self.particles = next;
        Ok(())
    }

    /// Runs all remaining iterations, keeping snapshots at the configured iterations.
    pub fn run(mut self) -> Result<(FlowTrajectory, PrivacyLedger)> {
        let keep = self.config.snapshot_iterations();
        let mut snapshots = Vec::with_capacity(keep.len());
        if keep.contains(&self.particles.iteration) {
            snapshots.push(self.particles.clone());
        }
        while self.particles.iteration < self.config.k_steps {
            self.step()?;
            if keep.contains(&self.particles.iteration) {
                snapshots.push(self.particles.clone());
            }
        }
        Ok((
            FlowTrajectory {
                snapshots,
                final_cloud: self.particles,
            },
            self.ledger,
        ))
    }
}

/// Runs whichever variant `config` selects.
pub fn run_flow(target: &Dataset, config: &FlowConfig) -> Result<(FlowTrajectory, PrivacyLedger)> {
    Flow::new(target, config)?.run()
}

/// The variant that redraws `n_theta` directions (and re-releases the target) every iteration.
pub fn run_dpswflow_r(target: &Dataset, config: &FlowConfig) -> Result<(FlowTrajectory, PrivacyLedger)> {
    if config.variant != Variant::Resampling {
        return Err(Error::invalid("run_dpswflow_r needs variant = resampling"));
    }
    run_flow(target, config)
}

/// The variant that releases the target once and subsamples `m_theta` directions per iteration.
pub fn run_dpswflow(target: &Dataset, config: &FlowConfig) -> Result<(FlowTrajectory, PrivacyLedger)> {
    if config.variant != Variant::Presampled {
        return Err(Error::invalid("run_dpswflow needs variant = presampled"));
    }
    run_flow(target, config)
}
