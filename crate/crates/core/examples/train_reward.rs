//! Trains a small multimodal embedding on tree-sampled pairs and shows
//! that the resulting dense reward increases along a demonstration.
//!
//! The model maps (two camera images + force/torque window) to a latent
//! vector; the reward of a state is one minus its latent distance to the
//! goal, normalized by the start-to-goal distance. This example uses a
//! reduced scale (8x8 images, small tree, few iterations) so it finishes
//! in about a minute; see the `experiment` subcommand for the full run.
//!
//! Run with: `cargo run --release --example train_reward`

use rewardlab::model::NetArch;
use rewardlab::reward::{train_embedding, TrainConfig};
use rewardlab::sampler::{build_tree, generate_expert, sample_pairs, SamplerConfig};
use rewardlab::sim::{observe, EnvConfig};

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    num / (dx.sqrt() * dy.sqrt())
}

fn main() {
    let mut env = EnvConfig::peg_hole();
    env.image_size = 8;
    let expert = generate_expert(&env, 11, 2000).expect("demonstration");
    let mut sampler = SamplerConfig::defaults_for(&env);
    sampler.m = 40;
    let tree = build_tree(&env, &expert, &sampler).expect("tree");
    let cfg = TrainConfig { iters: 400, ..TrainConfig::default() };
    let pairs =
        sample_pairs(&tree, cfg.triplet.epsilon, 200, sampler.rng_seed).expect("pairs");

    let start_obs = observe(&expert.states[0], None, &env);
    let arch = NetArch::for_observation(env.image_size, env.ft_history_len, 16);
    let (model, log) = train_embedding(&env, &tree, &pairs, &start_obs, arch, &cfg).expect("training");
    println!(
        "loss: {:.4} (iter {}) -> {:.4} (iter {})",
        log.first().unwrap().total,
        log.first().unwrap().iteration,
        log.last().unwrap().total,
        log.last().unwrap().iteration
    );

    // Score a held-out demonstration (different reset seed).
    let held_out = generate_expert(&env, 23, 2000).expect("held-out demonstration");
    let mut prev = None;
    let mut rewards = Vec::new();
    for state in &held_out.states {
        let obs = observe(state, prev.as_ref(), &env);
        rewards.push(model.dense_reward(&obs).expect("reward").value);
        prev = Some(obs);
    }
    let times: Vec<f64> = (0..rewards.len()).map(|t| t as f64).collect();
    println!(
        "dense reward along held-out demonstration: start {:.3} -> end {:.3}",
        rewards[0],
        rewards.last().unwrap()
    );
    println!("Spearman(reward, timestep) = {:.3}", spearman(&rewards, &times));
}
