//! Scripted probe policies that exercise a trained reward model.
//!
//! Each policy produces a deterministic state sequence (independent of
//! the reward model) and a per-step trace of the dense reward, the
//! contact flag, and the vertical force.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RewardError;
use crate::reward::RewardModel;
use crate::sampler::expert_action;
use crate::sim::{
    ft_reading, is_goal, observe, reset, step, wrap_angle, Action, EnvConfig, SimState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPolicyKind {
    /// Straight insertion, no detour.
    DirectSuccess,
    /// Touch down laterally offset, slide to alignment, then insert.
    AlignSuccess,
    /// Touch down offset, then slide away from the hole until contact
    /// is lost.
    SearchFail,
    /// Uniform random actions.
    Random,
}

impl ScriptedPolicyKind {
    pub const ALL: [ScriptedPolicyKind; 4] = [
        ScriptedPolicyKind::DirectSuccess,
        ScriptedPolicyKind::AlignSuccess,
        ScriptedPolicyKind::SearchFail,
        ScriptedPolicyKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScriptedPolicyKind::DirectSuccess => "direct_success",
            ScriptedPolicyKind::AlignSuccess => "align_success",
            ScriptedPolicyKind::SearchFail => "search_fail",
            ScriptedPolicyKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One row of a scripted reward trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub reward: f64,
    pub contact: bool,
    pub fy: f64,
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut out = String::from("step,reward,contact,fy\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.reward, r.contact as u8, r.fy));
    }
    std::fs::write(path, out)
}

struct ScriptState {
    touched: bool,
    contact_lost_after_touch: bool,
    /// Reset pose of the episode; the failed search retreats here.
    start_pose: [f64; 3],
}

fn scripted_action(
    kind: ScriptedPolicyKind,
    state: &SimState,
    env: &EnvConfig,
    script: &mut ScriptState,
    rng: &mut ChaCha8Rng,
) -> Action {
    let offset = 1.5 * env.clearance;
    let in_contact = !state.contact_points.is_empty();
    if in_contact {
        script.touched = true;
    } else if script.touched {
        script.contact_lost_after_touch = true;
    }
    match kind {
        ScriptedPolicyKind::DirectSuccess => expert_action(state, env),
        ScriptedPolicyKind::AlignSuccess => {
            if script.touched {
                expert_action(state, env)
            } else {
                // Descend toward a laterally offset touchdown point.
                let dx = env.hole_center[0] + offset - state.pose[0];
                let dth = wrap_angle(-state.pose[2]);
                Action::clamped([4.0 * dx, -env.action_limits[1] * 0.6, 4.0 * dth], env)
            }
        }
        ScriptedPolicyKind::SearchFail => {
            if script.contact_lost_after_touch {
                // The search slid off the fixture: give up and retreat to
                // the episode's start pose, then hover there.
                let dx = script.start_pose[0] - state.pose[0];
                let dy = script.start_pose[1] - state.pose[1];
                let dth = wrap_angle(script.start_pose[2] - state.pose[2]);
                Action::clamped([2.0 * dx, 2.0 * dy, 2.0 * dth - 0.7 * state.twist[2]], env)
            } else if script.touched {
                // Slide along the fixture surface, away from the hole.
                Action::clamped(
                    [env.action_limits[0] * 0.6, -env.action_limits[1] * 0.2, 0.0],
                    env,
                )
            } else {
                let dx = env.hole_center[0] + offset - state.pose[0];
                let dth = wrap_angle(-state.pose[2]);
                Action::clamped([4.0 * dx, -env.action_limits[1] * 0.6, 4.0 * dth], env)
            }
        }
        ScriptedPolicyKind::Random => {
            let mut t = [0.0; 3];
            for (i, v) in t.iter_mut().enumerate() {
                *v = rng.gen_range(-env.action_limits[i]..=env.action_limits[i]);
            }
            Action::clamped(t, env)
        }
    }
}

/// Rolls out one scripted policy, scoring every step with the dense
/// reward. The state sequence depends only on `(env, kind, seed)`, never
/// on the model.
pub fn run_scripted(
    kind: ScriptedPolicyKind,
    model: &RewardModel,
    env: &EnvConfig,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<TraceRow>, RewardError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = reset(env, seed).map_err(|e| RewardError::Dataset(e.to_string()))?;
    let mut obs = observe(&state, None, env);
    let mut script = ScriptState {
        touched: false,
        contact_lost_after_touch: false,
        start_pose: state.pose,
    };
    let mut rows = Vec::with_capacity(max_steps);
    for step_i in 0..max_steps {
        let r = model.dense_reward(&obs)?;
        rows.push(TraceRow {
            step: step_i,
            reward: r.value,
            contact: !state.contact_points.is_empty(),
            fy: ft_reading(&state, env)[1],
        });
        if matches!(kind, ScriptedPolicyKind::DirectSuccess | ScriptedPolicyKind::AlignSuccess)
            && is_goal(&state, env)
        {
            break;
        }
        let action = scripted_action(kind, &state, env, &mut script, &mut rng);
        state = step(&state, &action, env);
        obs = observe(&state, Some(&obs), env);
    }
    Ok(rows)
}

/// The state sequence of a scripted rollout, for model-agnostic checks.
pub fn scripted_states(
    kind: ScriptedPolicyKind,
    env: &EnvConfig,
    seed: u64,
    max_steps: usize,
) -> Vec<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = reset(env, seed).unwrap();
    let mut script = ScriptState {
        touched: false,
        contact_lost_after_touch: false,
        start_pose: state.pose,
    };
    let mut states = vec![state.clone()];
    for _ in 0..max_steps.saturating_sub(1) {
        if matches!(kind, ScriptedPolicyKind::DirectSuccess | ScriptedPolicyKind::AlignSuccess)
            && is_goal(&state, env)
        {
            break;
        }
        let action = scripted_action(kind, &state, env, &mut script, &mut rng);
        state = step(&state, &action, env);
        states.push(state.clone());
    }
    states
}
