//! Runs the 2D five-mode toy flow at a few smoothing levels and prints the
//! distance to the target after selected iterations.
//!
//! cargo run --release -p swflow-core --example toy_flow

use swflow::datagen::{Dataset, ToyTarget};
use swflow::flow::{run_flow, FlowConfig};
use swflow::metrics::{sliced_w2, MetricConfig};

fn main() -> swflow::Result<()> {
    let target = Dataset::new(ToyTarget::default().sample()?)?;
    let metric = MetricConfig::default();
    for sigma in [0.0, 0.5, 1.0] {
        let cfg = FlowConfig { snapshots: Some(vec![1, 10, 50, 100]), ..FlowConfig::toy(sigma, 0) };
        let (trajectory, ledger) = run_flow(&target, &cfg)?;
        print!("sigma={sigma:<4} releases={:<4}", ledger.release_count());
        for cloud in &trajectory.snapshots {
            print!(" k={}:{:.3}", cloud.iteration(), sliced_w2(cloud.positions(), target.rows(), &metric)?);
        }
        println!();
    }
    Ok(())
}
