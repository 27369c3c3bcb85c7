//! Runs a miniature end-to-end experiment: backward-sampled tree,
//! embedding training, multi-seed policy training with the learned dense
//! reward, aggregation, manifest, and figures.
//!
//! Every budget is shrunk so the whole pipeline finishes in a few
//! minutes; the `experiment` CLI subcommand runs the real thing.
//!
//! Run with: `cargo run --release --example full_experiment`

use std::path::PathBuf;

use rewardlab::harness::{emit_plots, run_experiment, Condition, ExperimentConfig};
use rewardlab::sampler::SamplerConfig;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.env.image_size = 8;
    // Wider clearance than the standard task so a short run can show
    // progress; insertion is still required.
    cfg.env.clearance = 12.0;
    cfg.sampler = SamplerConfig::defaults_for(&cfg.env);
    cfg.sampler.m = 40;
    cfg.condition = Condition::Drem;
    cfg.seeds = vec![0, 1];
    cfg.output_dir = PathBuf::from("out/full_experiment");
    cfg.iters = 400;
    cfg.total_steps = 2500;
    cfg.pair_count = 200;
    cfg.latent_dim = 16;
    cfg.sac.start_steps = 300;
    cfg.sac.episode_limit = 30;
    cfg.sac.eval_interval = 500;
    cfg.sac.eval_episodes = 3;

    let manifest = run_experiment(&cfg).expect("experiment");
    for entry in &manifest.entries {
        println!("seed {}: {}", entry.seed, entry.status);
    }
    let root = cfg.output_dir.join(cfg.condition.name());
    println!("artifacts under {} (see manifest.json for checksums)", root.display());
    for path in emit_plots(&root).expect("plots") {
        println!("wrote {}", path.display());
    }
}
