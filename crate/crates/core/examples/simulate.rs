//! Rolls the planar insertion environment forward with the privileged
//! scripted controller and prints the pose, contact state, and force
//! reading at each control step until the goal predicate fires.
//!
//! Run with: `cargo run --example simulate`

use rewardlab::sampler::expert_action;
use rewardlab::sim::{ft_reading, is_goal, observe, reset, step, EnvConfig};

fn main() {
    let env = EnvConfig::peg_hole();
    let seed = 7;
    let mut state = reset(&env, seed).expect("valid config");
    let mut obs = observe(&state, None, &env);

    println!(
        "observation: two {0}x{0} RGB images + {1}-sample force/torque window",
        obs.image_size,
        obs.ft_history.len()
    );
    println!("{:>4}  {:>8} {:>8} {:>8}  {:>8}  contact", "step", "x", "y", "theta", "fy");

    for t in 0..300 {
        let ft = ft_reading(&state, &env);
        println!(
            "{t:>4}  {:>8.3} {:>8.3} {:>8.4}  {:>8.3}  {}",
            state.pose[0],
            state.pose[1],
            state.pose[2],
            ft[1],
            !state.contact_points.is_empty()
        );
        if is_goal(&state, &env) {
            println!("goal reached after {t} steps");
            return;
        }
        let action = expert_action(&state, &env);
        state = step(&state, &action, &env);
        obs = observe(&state, Some(&obs), &env);
    }
    println!("goal not reached within the step budget");
}
