//! Overfitting one frame — the smallest possible training sanity check.
//!
//! A model that cannot drive the loss of a single sample toward zero has a
//! broken gradient or optimizer; one that can has the whole chain — graph
//! building, forward pass, manual backward pass, Adam — working together.
//!
//! Run with `cargo run --example train_overfit`.

use lgr::features::FeatureConfig;
use lgr::gns::{
    norm_stats_for, train_model, AdamConfig, AdamState, GnsModel, GnsSpec, TrainConfig, TrainItem,
};
use lgr::sph::{run_simulation, SimConfig};

fn main() {
    let mut config = SimConfig::taylor_green(216, 0);
    config.n_steps = 40;
    let run = run_simulation(&config).expect("simulation runs");
    let traj = run.trajectory;

    // Restrict the sample universe to exactly one frame: with history 5,
    // the range [15, 22) admits only t = 20.
    let item = TrainItem { trajectory: traj, force: run.force, frames: 15..22 };
    let stats = norm_stats_for(std::slice::from_ref(&item)).expect("stats");

    let dx = lgr::neighbor::average_interparticle_distance(
        item.trajectory.n_particles(),
        &item.trajectory.domain,
    );
    let features = FeatureConfig { noise_std: 0.0, ..FeatureConfig::new(1.5 * dx) };
    let spec = GnsSpec { latent: 16, blocks: 2, hidden_layers: 1 };
    let mut model = GnsModel::new(spec, features, stats, 0).expect("model");
    let mut adam = AdamState::new(model.param_count(), AdamConfig::constant(1e-2));
    println!("{} parameters, one training sample", model.param_count());

    let train_config = TrainConfig {
        steps: 300,
        batch_size: 1,
        seed: 0,
        val_every: 0,
        val_samples: 0,
        log_every: 0,
    };
    let items = [item];
    let start = std::time::Instant::now();
    let trained = train_model(&mut model, &mut adam, &items, &[], &train_config).expect("training");
    println!("300 steps in {:.1}s\n", start.elapsed().as_secs_f64());

    println!("  step    loss");
    for s in [0usize, 9, 49, 99, 199, 299] {
        println!("  {:>4}    {:.6e}", s + 1, trained.losses[s]);
    }
    let improvement = trained.losses[0] / trained.losses.last().unwrap();
    println!("\nimprovement factor {improvement:.0}x");
    assert!(improvement > 10.0, "overfitting must reduce the loss at least tenfold");
}
