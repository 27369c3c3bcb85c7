//! Builds a task progress tree by backward sampling from the goal state
//! of one scripted demonstration, then draws a balanced pair dataset and
//! prints its class statistics.
//!
//! Run with: `cargo run --example build_tree`

use rewardlab::sampler::{
    build_tree, generate_expert, sample_pairs, temporal_position, SamplerConfig,
};
use rewardlab::sim::EnvConfig;

fn main() {
    let env = EnvConfig::peg_hole();
    let expert = generate_expert(&env, 11, 2000).expect("scripted controller reaches the goal");
    println!("demonstration: {} states (observation-only)", expert.states.len());

    let mut cfg = SamplerConfig::defaults_for(&env);
    cfg.m = 60; // keep the example fast; the full pipeline uses 500
    let tree = build_tree(&env, &expert, &cfg).expect("tree build");
    println!(
        "tree: {} nodes, terminal depth {}, truncated: {}",
        tree.nodes.len(),
        tree.terminal_depth,
        tree.truncated
    );
    let root = tree.root();
    println!(
        "root is the goal state at depth {} with temporal position {}",
        root.depth,
        temporal_position(root, &tree)
    );

    let epsilon = 4;
    let pairs = sample_pairs(&tree, epsilon, 200, cfg.rng_seed).expect("pair sampling");
    let near = pairs.iter().filter(|p| p.neighboring).count();
    println!(
        "pairs: {} total, {near} neighboring (|t_b - t_a| <= {epsilon}), {} distant",
        pairs.len(),
        pairs.len() - near
    );
    let p = &pairs[0];
    println!("first pair: t_a = {}, t_b = {}, neighboring = {}", p.t_a, p.t_b, p.neighboring);
}
