#![allow(dead_code)]

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use swflow::datagen::{Dataset, ToyTarget};
use swflow::flow::{run_flow, Flow, FlowConfig, FlowTrajectory, Variant};
use swflow::metrics::{sliced_w2, MetricConfig};
use swflow::rng;

pub const TOY_SNAPSHOTS: [usize; 3] = [1, 10, 200];

pub fn toy_target() -> Dataset {
    Dataset::new(ToyTarget::default().sample().unwrap()).unwrap()
}

pub fn swd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, seed: u64) -> f64 {
    let cfg = MetricConfig { n_theta_eval: 500, sigma_eval: 0.0, seed };
    sliced_w2(a, b, &cfg).unwrap()
}

pub struct ToyRun {
    pub trajectory: FlowTrajectory,
    pub final_swd: f64,
    pub elapsed: Duration,
}

pub fn toy_run(target: &Dataset, sigma: f64, seed: u64, variant: Variant) -> ToyRun {
    let cfg = FlowConfig {
        variant,
        snapshots: Some(TOY_SNAPSHOTS.to_vec()),
        ..FlowConfig::toy(sigma, seed)
    };
    let start = Instant::now();
    let (trajectory, _) = run_flow(target, &cfg).unwrap();
    let elapsed = start.elapsed();
    let final_swd = swd(trajectory.final_cloud.positions(), target.rows(), seed);
    ToyRun { trajectory, final_swd, elapsed }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const STEP_T: f64 = 2.0;
const FINE_H: f64 = 0.1 / 8.0;

fn run_on_path(target: &Dataset, h: f64, path: &[Array2<f64>]) -> Array2<f64> {
    let block = (h / FINE_H).round() as usize;
    let k_steps = (STEP_T / h).round() as usize;
    let cfg = FlowConfig {
        h,
        lambda: 0.05,
        sigma: 0.0,
        n_theta: 50,
        m_theta: None,
        k_steps,
        variant: Variant::Presampled,
        seed: 3,
        n_particles: Some(target.len()),
        snapshots: Some(vec![]),
        ..FlowConfig::toy(0.0, 3)
    };
    let mut flow = Flow::new(target, &cfg).unwrap();
    let scale = 1.0 / (block as f64).sqrt();
    for chunk in path.chunks(block) {
        let mut g = Array2::<f64>::zeros(chunk[0].dim());
        for inc in chunk {
            g += inc;
        }
        g *= scale;
        flow.step_with(Some(g.view())).unwrap();
    }
    flow.particles().positions().to_owned()
}

/// Distance between the flow at step `h` and a reference at `h / 8` over the
/// same horizon, both driven by one Brownian path, for each `h` in `steps`.
pub fn step_size_errors(steps: &[f64]) -> Vec<f64> {
    let target = Dataset::new(ToyTarget { samples: 300, ..ToyTarget::default() }.sample().unwrap()).unwrap();
    let n_fine = (STEP_T / FINE_H).round() as usize;
    let mut g = rng::from_seed(77);
    let path: Vec<Array2<f64>> = (0..n_fine)
        .map(|_| Array2::from_shape_fn((target.len(), 2), |_| g.sample::<f64, _>(StandardNormal)))
        .collect();
    steps
        .iter()
        .map(|&h| {
            let coarse = run_on_path(&target, h, &path);
            let fine = run_on_path(&target, h / 8.0, &path);
            swd(coarse.view(), fine.view(), 5)
        })
        .collect()
}

/// Fraction of rows whose density reaches the level enclosing `mass` of the toy target.
pub fn inside_level_set(points: ArrayView2<'_, f64>, mass: f64) -> f64 {
    let mix = ToyTarget::default().mixture().unwrap();
    let threshold = mix.level_set_threshold(mass, 200_000, 17).unwrap();
    let inside = points
        .axis_iter(Axis(0))
        .filter(|r| mix.density(&r.to_vec()) >= threshold)
        .count();
    inside as f64 / points.nrows() as f64
}
