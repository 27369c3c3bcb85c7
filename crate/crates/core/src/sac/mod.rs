//! Desk-scale Soft Actor-Critic over raw observations.
//!
//! Twin critics with Polyak-averaged targets, a tanh-squashed Gaussian
//! actor, and temperature auto-tuning toward a fixed entropy target. Any
//! reward source plugs in: the learned dense reward (evaluated on
//! observations only), the binary success indicator, or the handcrafted
//! pose-distance baseline.

pub mod net;

use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RewardError, SacError};
use crate::nn::{checkpoint, AdamConfig, AdamState, Binding, ParamSet, Tape, Tensor, Var};
use crate::reward::{engineered_reward, EngineeredRewardConfig, RewardModel};
use crate::sim::{is_goal, observe, reset, step, Action, EnvConfig, Observation, SimState};

pub use net::{Actor, Critic, PolicyArch, PolicyInput};

/// Where rewards come from during policy training.
pub enum RewardSource<'a> {
    /// Learned dense reward, computed from the observation only.
    Dense(&'a RewardModel),
    /// Learned dense reward for a model trained without the F/T channel;
    /// the window is zeroed before encoding and the policy sees images
    /// only.
    DenseImageOnly(&'a RewardModel),
    /// Binary success indicator at episode termination.
    Sparse,
    /// Handcrafted pose-distance reward, computed from privileged state.
    Engineered(&'a EngineeredRewardConfig),
}

impl RewardSource<'_> {
    /// The learned-reward condition feeds F/T to the policy; baselines
    /// use images only.
    pub fn uses_ft(&self) -> bool {
        matches!(self, RewardSource::Dense(_))
    }

    pub fn reward(
        &self,
        state: &SimState,
        obs: &Observation,
        reached_goal: bool,
    ) -> Result<f64, RewardError> {
        match self {
            RewardSource::Dense(model) => Ok(model.dense_reward(obs)?.value),
            RewardSource::DenseImageOnly(model) => {
                let mut stripped = obs.clone();
                for row in stripped.ft_history.iter_mut() {
                    *row = [0.0; 3];
                }
                Ok(model.dense_reward(&stripped)?.value)
            }
            RewardSource::Sparse => Ok(if reached_goal { 1.0 } else { 0.0 }),
            RewardSource::Engineered(cfg) => Ok(engineered_reward(state, cfg)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Rc<Observation>,
    /// Normalized action in [-1, 1]^3.
    pub action: [f64; 3],
    pub reward: f64,
    pub next_obs: Rc<Observation>,
    pub next_state_goal: bool,
    /// True only at environment termination (the goal); masks the
    /// bootstrap. Step-limit truncation is *not* terminal: the value of
    /// the truncated state still bootstraps, otherwise timeouts far from
    /// the goal look artificially cheap.
    pub done: bool,
}

/// Uniform-sampling ring buffer.
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
    pub inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { items: Vec::with_capacity(capacity.min(4096)), capacity, next: 0, inserted: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau_smooth: f64,
    /// Target policy entropy; `None` selects the default `-action_dim`.
    pub entropy_target: Option<f64>,
    /// Fixed temperature; `None` enables auto-tuning.
    pub fixed_alpha: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    /// Gradient step every this many environment steps.
    pub update_every: usize,
    /// Uniform-random actions for this many initial steps.
    pub start_steps: usize,
    pub buffer_capacity: usize,
    pub episode_limit: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Rewards are multiplied by this before storage.
    pub reward_scale: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            tau_smooth: 0.005,
            entropy_target: None,
            fixed_alpha: None,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 16,
            update_every: 2,
            start_steps: 1000,
            buffer_capacity: 30_000,
            episode_limit: 100,
            eval_interval: 1000,
            eval_episodes: 5,
            reward_scale: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.tau_smooth > 0.0
            && self.tau_smooth <= 1.0
            && self.batch_size > 0
            && self.update_every > 0
            && self.episode_limit > 0
            && self.eval_interval > 0
            && self.eval_episodes > 0;
        if ok {
            Ok(())
        } else {
            Err(SacError::Divergence { which: "config", step: 0 })
        }
    }
}

/// All learnable state of one SAC run.
pub struct SacAgent {
    pub arch: PolicyArch,
    pub cfg: SacConfig,
    pub actor: Actor,
    pub actor_params: ParamSet,
    actor_adam: AdamState,
    pub critic1: Critic,
    pub critic1_params: ParamSet,
    critic1_adam: AdamState,
    pub critic2: Critic,
    pub critic2_params: ParamSet,
    critic2_adam: AdamState,
    pub target1: Critic,
    pub target1_params: ParamSet,
    pub target2: Critic,
    pub target2_params: ParamSet,
    log_alpha: ParamSet,
    alpha_adam: AdamState,
    entropy_target: f64,
}

impl SacAgent {
    pub fn new(arch: PolicyArch, cfg: SacConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_params = ParamSet::new();
        let actor = Actor::new(arch.clone(), &mut actor_params, "pi", &mut rng);
        let mut critic1_params = ParamSet::new();
        let critic1 = Critic::new(arch.clone(), &mut critic1_params, "q1", &mut rng);
        let mut critic2_params = ParamSet::new();
        let critic2 = Critic::new(arch.clone(), &mut critic2_params, "q2", &mut rng);
        let mut target1_params = ParamSet::new();
        let target1 = Critic::new(arch.clone(), &mut target1_params, "t1", &mut rng);
        let mut target2_params = ParamSet::new();
        let target2 = Critic::new(arch.clone(), &mut target2_params, "t2", &mut rng);
        copy_params(&mut target1_params, &critic1_params);
        copy_params(&mut target2_params, &critic2_params);
        let mut log_alpha = ParamSet::new();
        let init_alpha: f64 = cfg.fixed_alpha.unwrap_or(0.1);
        log_alpha.register("log_alpha", Tensor::new(vec![1], vec![init_alpha.ln()]));
        let actor_adam = AdamState::new(AdamConfig { lr: cfg.actor_lr, ..Default::default() }, &actor_params);
        let critic1_adam =
            AdamState::new(AdamConfig { lr: cfg.critic_lr, ..Default::default() }, &critic1_params);
        let critic2_adam =
            AdamState::new(AdamConfig { lr: cfg.critic_lr, ..Default::default() }, &critic2_params);
        let alpha_adam =
            AdamState::new(AdamConfig { lr: cfg.alpha_lr, ..Default::default() }, &log_alpha);
        let entropy_target = cfg.entropy_target.unwrap_or(-(arch.action_dim as f64));
        SacAgent {
            arch,
            cfg,
            actor,
            actor_params,
            actor_adam,
            critic1,
            critic1_params,
            critic1_adam,
            critic2,
            critic2_params,
            critic2_adam,
            target1,
            target1_params,
            target2,
            target2_params,
            log_alpha,
            alpha_adam,
            entropy_target,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self.cfg.fixed_alpha {
            Some(a) => a,
            None => self.log_alpha.get(self.log_alpha.by_name("log_alpha").unwrap()).tensor.data
                [0]
            .exp(),
        }
    }
}

fn copy_params(dst: &mut ParamSet, src: &ParamSet) {
    let ids: Vec<_> = dst.iter().map(|(id, _)| id).collect();
    for (i, id) in ids.into_iter().enumerate() {
        let s = src.iter().nth(i).unwrap().1.tensor.clone();
        dst.get_mut(id).tensor = s;
    }
}

/// `target <- (1 - tau) * target + tau * source`, elementwise in
/// registration order.
pub fn polyak_update(target: &mut ParamSet, source: &ParamSet, tau: f64) {
    let ids: Vec<_> = target.iter().map(|(id, _)| id).collect();
    for (i, id) in ids.into_iter().enumerate() {
        let src = &src_tensor(source, i).data;
        let dst = &mut target.get_mut(id).tensor.data;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (1.0 - tau) * *d + tau * *s;
        }
    }
}

fn src_tensor(set: &ParamSet, index: usize) -> &Tensor {
    &set.iter().nth(index).unwrap().1.tensor
}

/// Builds the squashed-Gaussian sample on `tape`: returns the normalized
/// action (tanh of the perturbed mean) and its log-probability.
fn sample_action_graph(
    tape: &mut Tape,
    actor: &Actor,
    binding: &Binding,
    input: &PolicyInput,
    xi: &[f64; 3],
) -> (Var, Var) {
    let (mean, log_std) = actor.forward(tape, binding, input);
    let std = tape.exp(log_std);
    let xi_v = tape.constant(Tensor::new(vec![3], xi.to_vec()));
    let noise = tape.mul(std, xi_v);
    let u = tape.add(mean, noise);
    let a = tape.tanh(u);
    // Gaussian log-density of u plus the tanh change-of-variables term.
    let sum_log_std = tape.sum(log_std);
    let neg = tape.scale(sum_log_std, -1.0);
    let const_term: f64 = xi
        .iter()
        .map(|x| -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum();
    let gauss = tape.add_scalar(neg, const_term);
    let a2 = tape.mul(a, a);
    let neg_a2 = tape.scale(a2, -1.0);
    let one_m = tape.add_scalar(neg_a2, 1.0 + 1e-6);
    let lg = tape.log(one_m);
    let correction = tape.sum(lg);
    let logp = tape.sub(gauss, correction);
    (a, logp)
}

/// Deterministic or seeded-stochastic action for one observation, scaled
/// to the environment limits.
pub fn policy_act(
    agent: &SacAgent,
    obs: &Observation,
    env: &EnvConfig,
    stochastic: bool,
    rng: &mut ChaCha8Rng,
) -> Action {
    let input = PolicyInput::from_observation(obs, &agent.arch);
    let mut tape = Tape::new();
    let binding = Binding::bind_frozen(&agent.actor_params, &mut tape);
    let (mean, log_std) = agent.actor.forward(&mut tape, &binding, &input);
    let mean = tape.value(mean).data.clone();
    let log_std = tape.value(log_std).data.clone();
    let mut twist = [0.0; 3];
    for i in 0..3 {
        let u = if stochastic {
            let xi: f64 = sample_standard_normal(rng);
            mean[i] + log_std[i].exp() * xi
        } else {
            mean[i]
        };
        twist[i] = u.tanh() * env.action_limits[i];
    }
    Action::clamped(twist, env)
}

/// Box-Muller standard normal from the deterministic stream.
fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Scalar losses reported by one gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Monte Carlo entropy estimate (-mean log-prob) of the actor batch.
    pub entropy_estimate: f64,
}

/// Bootstrapped critic targets for a batch; exposed for verification.
pub fn critic_targets(
    agent: &SacAgent,
    batch: &[&Transition],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let alpha = agent.alpha();
    let mut tape = Tape::new();
    let ab = Binding::bind_frozen(&agent.actor_params, &mut tape);
    let t1b = Binding::bind_frozen(&agent.target1_params, &mut tape);
    let t2b = Binding::bind_frozen(&agent.target2_params, &mut tape);
    batch
        .iter()
        .map(|t| {
            if t.done {
                return t.reward;
            }
            let input = PolicyInput::from_observation(&t.next_obs, &agent.arch);
            let xi = [
                sample_standard_normal(rng),
                sample_standard_normal(rng),
                sample_standard_normal(rng),
            ];
            let (a, logp) = sample_action_graph(&mut tape, &agent.actor, &ab, &input, &xi);
            let q1 = agent.target1.forward(&mut tape, &t1b, &input, a);
            let q2 = agent.target2.forward(&mut tape, &t2b, &input, a);
            let q = tape.scalar_value(q1).min(tape.scalar_value(q2));
            t.reward + agent.cfg.gamma * (q - alpha * tape.scalar_value(logp))
        })
        .collect()
}

/// One gradient step for both critics, the actor, and the temperature,
/// followed by the Polyak target update.
pub fn sac_update(
    agent: &mut SacAgent,
    buffer: &ReplayBuffer,
    rng: &mut ChaCha8Rng,
    global_step: usize,
) -> Result<LossReport, SacError> {
    assert!(buffer.len() >= agent.cfg.batch_size, "buffer smaller than batch");
    let idx = buffer.sample_indices(agent.cfg.batch_size, rng);
    let batch: Vec<&Transition> = idx.iter().map(|i| buffer.get(*i)).collect();
    let inputs: Vec<PolicyInput> = batch
        .iter()
        .map(|t| PolicyInput::from_observation(&t.obs, &agent.arch))
        .collect();
    let targets = critic_targets(agent, &batch, rng);
    let alpha = agent.alpha();

    // Critics.
    let critic_loss = {
        let mut tape = Tape::new();
        let b1 = Binding::bind_all(&agent.critic1_params, &mut tape);
        let b2 = Binding::bind_all(&agent.critic2_params, &mut tape);
        let mut sq1 = Vec::with_capacity(batch.len());
        let mut sq2 = Vec::with_capacity(batch.len());
        for ((t, input), y) in batch.iter().zip(&inputs).zip(&targets) {
            let a = tape.constant(Tensor::new(vec![3], t.action.to_vec()));
            let q1 = agent.critic1.forward(&mut tape, &b1, input, a);
            let q2 = agent.critic2.forward(&mut tape, &b2, input, a);
            let d1 = tape.add_scalar(q1, -y);
            sq1.push(tape.mul(d1, d1));
            let d2 = tape.add_scalar(q2, -y);
            sq2.push(tape.mul(d2, d2));
        }
        let m1 = tape.mean_stack(&sq1);
        let m2 = tape.mean_stack(&sq2);
        let loss = tape.add(m1, m2);
        let v = tape.scalar_value(loss);
        if !v.is_finite() {
            return Err(SacError::Divergence { which: "critic", step: global_step });
        }
        let grads = tape.backward(loss).map_err(RewardError::Nn)?;
        agent.critic1_adam.step(&mut agent.critic1_params, &grads, &b1);
        agent.critic2_adam.step(&mut agent.critic2_params, &grads, &b2);
        v
    };

    // Actor (critics frozen).
    let (actor_loss, mean_logp) = {
        let mut tape = Tape::new();
        let ab = Binding::bind_all(&agent.actor_params, &mut tape);
        let f1 = Binding::bind_frozen(&agent.critic1_params, &mut tape);
        let f2 = Binding::bind_frozen(&agent.critic2_params, &mut tape);
        let mut terms = Vec::with_capacity(batch.len());
        let mut logp_sum = 0.0;
        for input in &inputs {
            let xi = [
                sample_standard_normal(rng),
                sample_standard_normal(rng),
                sample_standard_normal(rng),
            ];
            let (a, logp) = sample_action_graph(&mut tape, &agent.actor, &ab, input, &xi);
            let q1 = agent.critic1.forward(&mut tape, &f1, input, a);
            let q2 = agent.critic2.forward(&mut tape, &f2, input, a);
            let qmin = if tape.scalar_value(q1) <= tape.scalar_value(q2) { q1 } else { q2 };
            let scaled = tape.scale(logp, alpha);
            terms.push(tape.sub(scaled, qmin));
            logp_sum += tape.scalar_value(logp);
        }
        let loss = tape.mean_stack(&terms);
        let v = tape.scalar_value(loss);
        if !v.is_finite() {
            return Err(SacError::Divergence { which: "actor", step: global_step });
        }
        let grads = tape.backward(loss).map_err(RewardError::Nn)?;
        agent.actor_adam.step(&mut agent.actor_params, &grads, &ab);
        (v, logp_sum / batch.len() as f64)
    };

    // Temperature toward the entropy target.
    let alpha_loss = if agent.cfg.fixed_alpha.is_none() {
        let mut tape = Tape::new();
        let b = Binding::bind_all(&agent.log_alpha, &mut tape);
        let la = b.var(agent.log_alpha.by_name("log_alpha").unwrap());
        let loss = tape.scale(la, -(mean_logp + agent.entropy_target));
        let v = tape.scalar_value(loss);
        if !v.is_finite() {
            return Err(SacError::Divergence { which: "temperature", step: global_step });
        }
        let grads = tape.backward(loss).map_err(RewardError::Nn)?;
        agent.alpha_adam.step(&mut agent.log_alpha, &grads, &b);
        v
    } else {
        0.0
    };

    polyak_update(&mut agent.target1_params, &agent.critic1_params, agent.cfg.tau_smooth);
    polyak_update(&mut agent.target2_params, &agent.critic2_params, agent.cfg.tau_smooth);

    Ok(LossReport {
        critic_loss,
        actor_loss,
        alpha_loss,
        alpha: agent.alpha(),
        entropy_estimate: -mean_logp,
    })
}

/// One point of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub eval_success_rate: f64,
    pub mean_eval_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> std::io::Result<()> {
    let mut out =
        String::from("step,eval_success_rate,mean_eval_return,critic_loss,actor_loss,alpha\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.step, p.eval_success_rate, p.mean_eval_return, p.critic_loss, p.actor_loss, p.alpha
        ));
    }
    std::fs::write(path, out)
}

/// Deterministic evaluation: `episodes` rollouts with the mean action,
/// success measured by the goal predicate only.
pub fn evaluate_policy(
    agent: &SacAgent,
    env: &EnvConfig,
    source: &RewardSource,
    episodes: usize,
    seed_base: u64,
) -> Result<(f64, f64), SacError> {
    let mut successes = 0usize;
    let mut return_sum = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base);
    for ep in 0..episodes {
        let mut state = reset(env, seed_base.wrapping_add(ep as u64)).map_err(invalid_env)?;
        let mut obs = observe(&state, None, env);
        let mut success = false;
        for _ in 0..agent.cfg.episode_limit {
            let action = policy_act(agent, &obs, env, false, &mut rng);
            state = step(&state, &action, env);
            let reached = is_goal(&state, env);
            obs = observe(&state, Some(&obs), env);
            return_sum += source.reward(&state, &obs, reached)?;
            if reached {
                success = true;
                break;
            }
        }
        if success {
            successes += 1;
        }
    }
    Ok((successes as f64 / episodes as f64, return_sum / episodes as f64))
}

fn invalid_env(e: crate::error::SimError) -> SacError {
    SacError::Reward(RewardError::Dataset(e.to_string()))
}

/// Full training loop: seeded rollouts alternating with gradient steps,
/// with periodic deterministic evaluation.
pub fn train_policy(
    env: &EnvConfig,
    source: &RewardSource,
    cfg: &SacConfig,
    total_steps: usize,
    seed: u64,
) -> Result<(Vec<CurvePoint>, SacAgent), SacError> {
    cfg.validate()?;
    let arch = PolicyArch::new(env.image_size, env.ft_history_len, source.uses_ft());
    let mut agent = SacAgent::new(arch, cfg.clone(), seed);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(1));
    let mut curve = Vec::new();
    let mut last_report = LossReport {
        critic_loss: f64::NAN,
        actor_loss: f64::NAN,
        alpha_loss: 0.0,
        alpha: agent.alpha(),
        entropy_estimate: f64::NAN,
    };

    let mut global_step = 0usize;
    let mut episode = 0u64;
    while global_step < total_steps {
        let mut state = reset(env, seed.wrapping_add(episode << 20)).map_err(invalid_env)?;
        let mut obs = Rc::new(observe(&state, None, env));
        episode += 1;
        for _t in 0..cfg.episode_limit {
            if global_step >= total_steps {
                break;
            }
            let action = if global_step < cfg.start_steps {
                let mut a = [0.0; 3];
                for v in a.iter_mut() {
                    *v = rng.gen_range(-1.0..=1.0);
                }
                a
            } else {
                let act = policy_act(&agent, &obs, env, true, &mut rng);
                normalized(&act, env)
            };
            let env_action = Action::clamped(
                [
                    action[0] * env.action_limits[0],
                    action[1] * env.action_limits[1],
                    action[2] * env.action_limits[2],
                ],
                env,
            );
            let next_state = step(&state, &env_action, env);
            let reached = is_goal(&next_state, env);
            let next_obs = Rc::new(observe(&next_state, Some(&obs), env));
            let done = reached;
            let r = source.reward(&next_state, &next_obs, reached)? * cfg.reward_scale;
            buffer.push(Transition {
                obs: Rc::clone(&obs),
                action,
                reward: r,
                next_obs: Rc::clone(&next_obs),
                next_state_goal: reached,
                done,
            });
            state = next_state;
            obs = next_obs;
            global_step += 1;

            if buffer.len() >= cfg.batch_size
                && global_step >= cfg.start_steps
                && global_step % cfg.update_every == 0
            {
                last_report = sac_update(&mut agent, &buffer, &mut rng, global_step)?;
            }
            if global_step % cfg.eval_interval == 0 {
                let eval_seed = seed.wrapping_mul(0x517C_C1B7).wrapping_add(global_step as u64);
                let (succ, ret) =
                    evaluate_policy(&agent, env, source, cfg.eval_episodes, eval_seed)?;
                curve.push(CurvePoint {
                    step: global_step,
                    eval_success_rate: succ,
                    mean_eval_return: ret,
                    critic_loss: last_report.critic_loss,
                    actor_loss: last_report.actor_loss,
                    alpha: last_report.alpha,
                });
            }
            if reached {
                break;
            }
        }
    }
    Ok((curve, agent))
}

fn normalized(action: &Action, env: &EnvConfig) -> [f64; 3] {
    let mut a = [0.0; 3];
    for i in 0..3 {
        a[i] = (action.twist_cmd[i] / env.action_limits[i]).clamp(-1.0, 1.0);
    }
    a
}

/// Saves the actor as a checkpoint; critics and optimizer state are not
/// persisted.
pub fn save_policy(path: &Path, agent: &SacAgent) -> Result<(), SacError> {
    let meta = serde_json::json!({
        "image_size": agent.arch.image_size,
        "ft_history_len": agent.arch.ft_history_len,
        "uses_ft": agent.arch.uses_ft,
    });
    checkpoint::save(path, &meta, &agent.actor_params).map_err(RewardError::Nn)?;
    Ok(())
}

/// Restores an actor-only agent for evaluation.
pub fn load_policy(path: &Path, cfg: SacConfig) -> Result<SacAgent, SacError> {
    let (meta, loaded) = checkpoint::load(path).map_err(RewardError::Nn)?;
    let arch = PolicyArch::new(
        meta["image_size"].as_u64().unwrap_or(32) as usize,
        meta["ft_history_len"].as_u64().unwrap_or(8) as usize,
        meta["uses_ft"].as_bool().unwrap_or(false),
    );
    let mut agent = SacAgent::new(arch, cfg, 0);
    for (_, p) in loaded.iter() {
        if let Some(id) = agent.actor_params.by_name(&p.name) {
            agent.actor_params.get_mut(id).tensor = p.tensor.clone();
        }
    }
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env8() -> EnvConfig {
        let mut e = EnvConfig::peg_hole();
        e.image_size = 8;
        e
    }

    fn mini_cfg() -> SacConfig {
        SacConfig {
            batch_size: 4,
            update_every: 1,
            start_steps: 8,
            buffer_capacity: 512,
            episode_limit: 10,
            eval_interval: 20,
            eval_episodes: 2,
            ..SacConfig::default()
        }
    }

    fn filled_buffer(env: &EnvConfig, n: usize, seed: u64) -> ReplayBuffer {
        let mut buffer = ReplayBuffer::new(n.max(4));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = reset(env, seed).unwrap();
        let mut obs = Rc::new(observe(&state, None, env));
        for i in 0..n {
            let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let act = Action::clamped(
                [a[0] * env.action_limits[0], a[1] * env.action_limits[1], a[2] * env.action_limits[2]],
                env,
            );
            let next = step(&state, &act, env);
            let next_obs = Rc::new(observe(&next, Some(&obs), env));
            buffer.push(Transition {
                obs: Rc::clone(&obs),
                action: a,
                reward: 0.1 * (i % 5) as f64,
                next_obs: Rc::clone(&next_obs),
                next_state_goal: false,
                done: i % 7 == 6,
            });
            state = next;
            obs = next_obs;
        }
        buffer
    }

    #[test]
    fn policy_actions_respect_limits_and_determinism() {
        let e = env8();
        let arch = PolicyArch::new(8, e.ft_history_len, true);
        let agent = SacAgent::new(arch, SacConfig::default(), 3);
        let s = reset(&e, 1).unwrap();
        let obs = observe(&s, None, &e);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let a = policy_act(&agent, &obs, &e, true, &mut rng);
            for i in 0..3 {
                assert!(a.twist_cmd[i].abs() <= e.action_limits[i]);
            }
        }
        let d1 = policy_act(&agent, &obs, &e, false, &mut rng);
        let d2 = policy_act(&agent, &obs, &e, false, &mut rng);
        assert_eq!(d1, d2);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            policy_act(&agent, &obs, &e, true, &mut r1),
            policy_act(&agent, &obs, &e, true, &mut r2)
        );
    }

    #[test]
    fn polyak_with_tau_one_copies_exactly() {
        let e = env8();
        let arch = PolicyArch::new(8, e.ft_history_len, false);
        let mut agent = SacAgent::new(arch, SacConfig::default(), 5);
        // Perturb the live critic, then snap targets onto it.
        let ids: Vec<_> = agent.critic1_params.iter().map(|(id, _)| id).collect();
        for id in ids {
            for v in agent.critic1_params.get_mut(id).tensor.data.iter_mut() {
                *v += 0.25;
            }
        }
        polyak_update(&mut agent.target1_params, &agent.critic1_params, 1.0);
        for (i, (_, p)) in agent.target1_params.iter().enumerate() {
            let src = agent.critic1_params.iter().nth(i).unwrap().1;
            assert_eq!(p.tensor.data, src.tensor.data);
        }
    }

    #[test]
    fn terminal_transition_target_is_exactly_reward() {
        let e = env8();
        let arch = PolicyArch::new(8, e.ft_history_len, false);
        let agent = SacAgent::new(arch, SacConfig::default(), 5);
        let buffer = filled_buffer(&e, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<&Transition> = (0..8).map(|i| buffer.get(i)).collect();
        let targets = critic_targets(&agent, &batch, &mut rng);
        for (t, y) in batch.iter().zip(&targets) {
            if t.done {
                assert_eq!(*y, t.reward);
            } else {
                assert_ne!(*y, t.reward);
            }
        }
    }

    #[test]
    fn repeated_updates_on_fixed_batch_reduce_critic_loss() {
        let e = env8();
        let arch = PolicyArch::new(8, e.ft_history_len, false);
        let mut cfg = SacConfig::default();
        cfg.batch_size = 4;
        cfg.critic_lr = 3e-3;
        let mut agent = SacAgent::new(arch, cfg, 5);
        // Buffer size equals batch size, so every draw is the same batch.
        let buffer = filled_buffer(&e, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let first = sac_update(&mut agent, &buffer, &mut rng, 0).unwrap().critic_loss;
        let mut last = first;
        for s in 1..50 {
            last = sac_update(&mut agent, &buffer, &mut rng, s).unwrap().critic_loss;
        }
        assert!(last < first, "critic loss did not decrease: {first} -> {last}");
        assert!(last.is_finite());
    }

    #[test]
    fn smoke_training_on_easy_goal_reaches_high_success() {
        // A wide, always-deep goal region: success only requires moving
        // laterally toward the hole axis.
        let mut e = env8();
        e.clearance = 30.0;
        e.insertion_depth_min = -60.0;
        e.theta_goal_tol = std::f64::consts::PI;
        let mut cfg = mini_cfg();
        cfg.episode_limit = 20;
        cfg.eval_interval = 500;
        cfg.eval_episodes = 5;
        cfg.start_steps = 200;
        let (curve, _agent) =
            train_policy(&e, &RewardSource::Sparse, &cfg, 3500, 1).unwrap();
        assert_eq!(curve.len(), 3500 / 500);
        let final_rate = curve.last().unwrap().eval_success_rate;
        assert!(final_rate >= 0.8, "final success {final_rate}");
    }

    #[test]
    fn training_curves_are_deterministic_per_seed() {
        let e = env8();
        let cfg = mini_cfg();
        let (c1, _) = train_policy(&e, &RewardSource::Sparse, &cfg, 60, 7).unwrap();
        let (c2, _) = train_policy(&e, &RewardSource::Sparse, &cfg, 60, 7).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.len(), 60 / 20);
    }

    #[test]
    fn policy_checkpoint_round_trip() {
        let e = env8();
        let arch = PolicyArch::new(8, e.ft_history_len, true);
        let agent = SacAgent::new(arch, SacConfig::default(), 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        save_policy(&path, &agent).unwrap();
        let loaded = load_policy(&path, SacConfig::default()).unwrap();
        let s = reset(&e, 2).unwrap();
        let obs = observe(&s, None, &e);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            policy_act(&agent, &obs, &e, false, &mut rng),
            policy_act(&loaded, &obs, &e, false, &mut rng)
        );
    }
}
