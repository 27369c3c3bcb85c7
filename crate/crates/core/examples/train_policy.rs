//! Trains a soft actor-critic policy from pixels on an easy variant of
//! the insertion task and prints the evaluation curve.
//!
//! The variant widens the clearance and goal tolerances so a short run
//! shows learning; the `experiment` subcommand runs the full task. The
//! reward here is the handcrafted pose-distance baseline, so no reward
//! model needs to be trained first.
//!
//! Run with: `cargo run --release --example train_policy`

use rewardlab::reward::EngineeredRewardConfig;
use rewardlab::sac::{train_policy, RewardSource, SacConfig};
use rewardlab::sim::EnvConfig;

fn main() {
    let mut env = EnvConfig::peg_hole();
    env.image_size = 8;
    env.clearance = 30.0;
    env.insertion_depth_min = -60.0;
    env.theta_goal_tol = std::f64::consts::PI;

    let engineered = EngineeredRewardConfig::defaults_for(&env);
    let source = RewardSource::Engineered(&engineered);
    let mut cfg = SacConfig::default();
    cfg.start_steps = 300;
    cfg.episode_limit = 30;
    cfg.eval_interval = 500;
    cfg.eval_episodes = 3;

    let total_steps = 3500;
    println!("training for {total_steps} environment steps...");
    let (curve, agent) = train_policy(&env, &source, &cfg, total_steps, 0).expect("training");
    println!("{:>6}  {:>8}  {:>8}", "step", "success", "return");
    for p in &curve {
        println!("{:>6}  {:>8.2}  {:>8.2}", p.step, p.eval_success_rate, p.mean_eval_return);
    }
    println!("final temperature alpha = {:.4}", agent.alpha());
}
