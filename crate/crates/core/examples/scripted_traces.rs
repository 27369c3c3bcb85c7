//! Scores four scripted probe policies with a trained dense-reward model
//! and writes their reward traces as CSVs plus one SVG figure.
//!
//! The probes stress the reward's shape: `direct_success` should rise
//! toward 1, `align_success` should dip during misaligned contact then
//! recover, `search_fail` should collapse after it slides off the
//! fixture, and `random` should hover near 0.
//!
//! Run with: `cargo run --release --example scripted_traces`

use std::path::Path;

use rewardlab::harness::{emit_plots, run_scripted, write_trace_csv, ScriptedPolicyKind};
use rewardlab::model::NetArch;
use rewardlab::reward::{train_embedding, TrainConfig};
use rewardlab::sampler::{build_tree, generate_expert, sample_pairs, SamplerConfig};
use rewardlab::sim::{observe, EnvConfig};

fn main() {
    let mut env = EnvConfig::peg_hole();
    env.image_size = 8;
    let expert = generate_expert(&env, 11, 2000).expect("demonstration");
    let mut sampler = SamplerConfig::defaults_for(&env);
    sampler.m = 40;
    let tree = build_tree(&env, &expert, &sampler).expect("tree");
    let cfg = TrainConfig { iters: 400, ..TrainConfig::default() };
    let pairs = sample_pairs(&tree, cfg.triplet.epsilon, 200, sampler.rng_seed).expect("pairs");
    let start_obs = observe(&expert.states[0], None, &env);
    let arch = NetArch::for_observation(env.image_size, env.ft_history_len, 16);
    let (model, _) = train_embedding(&env, &tree, &pairs, &start_obs, arch, &cfg).expect("training");

    let out = Path::new("out/scripted_traces");
    std::fs::create_dir_all(out).expect("output dir");
    for kind in ScriptedPolicyKind::ALL {
        let rows = run_scripted(kind, &model, &env, 5, 160).expect("rollout");
        let mean = rows.iter().map(|r| r.reward).sum::<f64>() / rows.len() as f64;
        let last = rows.last().unwrap().reward;
        println!(
            "{:>14}: {} steps, mean reward {mean:.3}, final reward {last:.3}",
            kind.name(),
            rows.len()
        );
        write_trace_csv(&out.join(format!("trace_{}.csv", kind.name())), &rows)
            .expect("trace csv");
    }
    for path in emit_plots(out).expect("plots") {
        println!("wrote {}", path.display());
    }
}
