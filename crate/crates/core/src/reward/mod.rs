//! Dense reward from the learned embedding, plus baseline rewards.
//!
//! The dense reward is the latent distance ratio
//! `R(s) = 1 - dist(h(s), h(goal)) / dist(h(start), h(goal))`,
//! clamped to `[0, 1]` by default. Baselines: a binary success indicator
//! and a handcrafted pose-distance reward.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RewardError;
use crate::model::loss::{total_loss, LossParts, PairRef, TripletConfig};
use crate::model::{Decoder, Encoder, NetArch, ObsTensors};
use crate::nn::{checkpoint, latent_distance, AdamConfig, AdamState, Binding, ParamSet, Tape};
use crate::sampler::{TaskProgressTree, TrainingPair};
use crate::sim::{is_goal, wrap_angle, EnvConfig, Observation, SimState};

/// Embedding-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub triplet: TripletConfig,
    pub iters: usize,
    /// Pairs per minibatch; half neighboring, half non-neighboring.
    pub batch_pairs: usize,
    pub lr: f64,
    /// Per-channel half-range around the base palette from which a fresh
    /// scene palette is drawn for each training batch (views are
    /// re-rendered with it; 0 disables). Should be at least the episode
    /// reset's own color perturbation range so every episode palette is
    /// covered.
    pub color_jitter: f64,
    /// Half-range (world units) of the per-sample pose perturbation
    /// applied to free-space training states before re-rendering; the
    /// rotation component is scaled down (0.15x in radians). Roughly one
    /// tube-width of motion, within the slack the temporal margin allows,
    /// so nearby never-visited poses inherit sensible progress values
    /// instead of defaulting to an arbitrary latent (0 disables).
    pub pose_jitter: f64,
    /// Train on horizontally mirrored scenes half the time. Only applied
    /// when the scene is left-right symmetric (hole on the x = 0 axis,
    /// symmetric workspace bounds), where mirroring is an exact symmetry
    /// of the task.
    pub mirror_augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            triplet: TripletConfig::default(),
            iters: 20_000,
            batch_pairs: 16,
            lr: 2e-4,
            color_jitter: 0.15,
            pose_jitter: 2.0,
            mirror_augment: true,
            seed: 0,
        }
    }
}

/// One row of the training loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub triplet: f64,
    pub reconstruction: f64,
    pub total: f64,
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> std::io::Result<()> {
    let mut out = String::from("iteration,triplet,reconstruction,total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.triplet, r.reconstruction, r.total
        ));
    }
    std::fs::write(path, out)
}

/// Trained embedding packaged as a fixed reward function.
pub struct RewardModel {
    pub arch: NetArch,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub params: ParamSet,
    pub latent_goal: Vec<f64>,
    pub latent_start: Vec<f64>,
    /// `dist(h(start), h(goal))`, the fixed denominator of the ratio.
    pub denom: f64,
    pub clamp_output: bool,
}

/// A dense-reward evaluation: the clamped value and the raw ratio before
/// clamping, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardValue {
    pub value: f64,
    pub raw: f64,
}

/// The distance-ratio rule on plain scalars.
pub fn reward_from_distances(dist_to_goal: f64, denom: f64, clamp: bool) -> RewardValue {
    let raw = 1.0 - dist_to_goal / denom;
    RewardValue { value: if clamp { raw.clamp(0.0, 1.0) } else { raw }, raw }
}

impl RewardModel {
    pub fn dense_reward(&self, obs: &Observation) -> Result<RewardValue, RewardError> {
        if !(self.denom > 0.0) || !self.denom.is_finite() {
            return Err(RewardError::DegenerateDenominator);
        }
        let h = self.encoder.encode(&self.params, obs)?;
        let d = latent_distance(&h, &self.latent_goal)?;
        Ok(reward_from_distances(d, self.denom, self.clamp_output))
    }

    pub fn save(&self, path: &Path) -> Result<(), RewardError> {
        let meta = serde_json::json!({
            "arch": self.arch,
            "latent_goal": self.latent_goal,
            "latent_start": self.latent_start,
            "denom": self.denom,
            "clamp_output": self.clamp_output,
        });
        checkpoint::save(path, &meta, &self.params)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RewardError> {
        let (meta, loaded) = checkpoint::load(path)?;
        let arch: NetArch = serde_json::from_value(meta["arch"].clone())
            .map_err(|e| RewardError::Dataset(format!("bad checkpoint meta: {e}")))?;
        let latent_goal: Vec<f64> = serde_json::from_value(meta["latent_goal"].clone())
            .map_err(|e| RewardError::Dataset(format!("bad checkpoint meta: {e}")))?;
        let latent_start: Vec<f64> = serde_json::from_value(meta["latent_start"].clone())
            .map_err(|e| RewardError::Dataset(format!("bad checkpoint meta: {e}")))?;
        let denom = meta["denom"].as_f64().ok_or_else(|| {
            RewardError::Dataset("checkpoint meta missing denom".into())
        })?;
        let clamp_output = meta["clamp_output"].as_bool().unwrap_or(true);
        // Rebuild the network layout, then overwrite every tensor by name.
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let encoder = Encoder::new(arch.clone(), &mut params, "enc", &mut rng);
        let decoder = Decoder::new(arch.clone(), &mut params, "dec", &mut rng);
        for (_, p) in loaded.iter() {
            let id = params.by_name(&p.name).ok_or_else(|| {
                RewardError::Dataset(format!("checkpoint tensor {} has no slot", p.name))
            })?;
            params.get_mut(id).tensor = p.tensor.clone();
        }
        Ok(RewardModel {
            arch,
            encoder,
            decoder,
            params,
            latent_goal,
            latent_start,
            denom,
            clamp_output,
        })
    }
}

/// Per-batch augmentation: a freshly drawn scene palette (views are
/// re-rendered from the stored simulator states, imitating the color
/// perturbation every episode reset applies), an optional horizontal
/// mirror of the whole scene, and a small per-sample pose perturbation
/// for free-space states. All transforms preserve every temporal
/// relation in the batch (the pose perturbation stays within the motion
/// the temporal slack epsilon allows), so the triplet targets are
/// unchanged.
struct Augmentation {
    palette: Option<crate::sim::ObjectColors>,
    mirror: bool,
    pose_jitter: f64,
}

impl Augmentation {
    fn draw(rng: &mut ChaCha8Rng, cfg: &TrainConfig, allow_mirror: bool) -> Self {
        let jitter = cfg.color_jitter;
        let palette = if jitter > 0.0 {
            let mut p = crate::sim::ObjectColors::base();
            for color in [&mut p.background, &mut p.fixture, &mut p.peg] {
                for v in color.iter_mut() {
                    *v = (*v + rng.gen_range(-jitter..=jitter)).clamp(0.0, 1.0);
                }
            }
            Some(p)
        } else {
            None
        };
        let mirror = allow_mirror && rng.gen_bool(0.5);
        Augmentation { palette, mirror, pose_jitter: cfg.pose_jitter }
    }

    fn tensors(
        &self,
        state: &SimState,
        obs: &Observation,
        env: &EnvConfig,
        arch: &NetArch,
        pose_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ObsTensors, RewardError> {
        // Pose perturbation only applies to states flying clear of the
        // fixture (a rotated peg's lowest corner stays above the top
        // surface), so every perturbed render is a reachable free-space
        // scene.
        let half_diag = (env.peg_half_width.powi(2) + env.peg_half_height.powi(2)).sqrt();
        let y_floor = env.hole_center[1] + half_diag + self.pose_jitter.min(1.0);
        let jitterable = self.pose_jitter > 0.0
            && state.contact_points.is_empty()
            && state.pose[1] > y_floor;
        let pose_delta = match pose_rng {
            Some(rng) if jitterable => {
                let j = self.pose_jitter;
                Some([
                    rng.gen_range(-j..=j),
                    rng.gen_range(-j..=j),
                    rng.gen_range(-0.15 * j..=0.15 * j),
                ])
            }
            _ => None,
        };
        if self.palette.is_none() && pose_delta.is_none() {
            let mut t = ObsTensors::from_observation(obs, arch)?;
            if self.mirror {
                crate::model::mirror_obs_tensors(&mut t, arch.image_size, arch.ft_history_len);
            }
            return Ok(t);
        }
        let mut s = state.clone();
        if let Some(palette) = &self.palette {
            s.object_colors = *palette;
        }
        if let Some(d) = pose_delta {
            let b = &env.workspace_bounds;
            s.pose[0] = (s.pose[0] + d[0]).clamp(b.x_min + half_diag, b.x_max - half_diag);
            s.pose[1] = (s.pose[1] + d[1]).clamp(y_floor, b.y_max - half_diag);
            s.pose[2] = crate::sim::wrap_angle(s.pose[2] + d[2]);
        }
        let n = arch.image_size;
        let mut t = ObsTensors {
            fixed_chw: crate::model::hwc_bytes_to_chw(&crate::sim::render::render_fixed(&s, env), n),
            wrist_chw: crate::model::hwc_bytes_to_chw(&crate::sim::render::render_wrist(&s, env), n),
            ft_ct: crate::model::ft_rows_to_ct(&obs.ft_history),
        };
        if self.mirror {
            crate::model::mirror_obs_tensors(&mut t, n, arch.ft_history_len);
        }
        Ok(t)
    }
}

/// Trains the embedding on a balanced pair dataset drawn from the tree,
/// then caches the start/goal latent anchors. Returns the model and the
/// per-iteration loss log.
pub fn train_embedding(
    env: &EnvConfig,
    tree: &TaskProgressTree,
    pairs: &[TrainingPair],
    start_obs: &Observation,
    arch: NetArch,
    cfg: &TrainConfig,
) -> Result<(RewardModel, Vec<LossRow>), RewardError> {
    let near: Vec<&TrainingPair> = pairs.iter().filter(|p| p.neighboring).collect();
    let far: Vec<&TrainingPair> = pairs.iter().filter(|p| !p.neighboring).collect();
    if pairs.is_empty() || near.is_empty() || far.is_empty() {
        return Err(RewardError::Dataset(format!(
            "need both pair classes, got {} neighboring / {} non-neighboring",
            near.len(),
            far.len()
        )));
    }
    if cfg.batch_pairs < 2 || cfg.batch_pairs % 2 != 0 {
        return Err(RewardError::Dataset(format!(
            "batch_pairs must be a positive even number, got {}",
            cfg.batch_pairs
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamSet::new();
    let encoder = Encoder::new(arch.clone(), &mut params, "enc", &mut rng);
    let decoder = Decoder::new(arch.clone(), &mut params, "dec", &mut rng);
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params);
    let goal_obs = tree.goal_observation();
    // Mirroring is only an exact symmetry when the hole sits on the
    // x = 0 axis of a symmetric workspace.
    let b = &env.workspace_bounds;
    let allow_mirror =
        cfg.mirror_augment && env.hole_center[0] == 0.0 && b.x_min == -b.x_max;

    let mut log = Vec::with_capacity(cfg.iters);
    let per_class = cfg.batch_pairs / 2;
    for iteration in 0..cfg.iters {
        let aug = Augmentation::draw(&mut rng, cfg, allow_mirror);
        // Balanced draw: equal numbers from each temporal class.
        let mut batch: Vec<&TrainingPair> = Vec::with_capacity(cfg.batch_pairs);
        for _ in 0..per_class {
            batch.push(near[rng.gen_range(0..near.len())]);
        }
        for _ in 0..per_class {
            batch.push(far[rng.gen_range(0..far.len())]);
        }
        // Encode each distinct observation once.
        let node_ids: Vec<usize> = batch
            .iter()
            .flat_map(|p| [p.node_a, p.node_b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut tensors: Vec<ObsTensors> = Vec::with_capacity(node_ids.len());
        for id in &node_ids {
            let n = &tree.nodes[*id];
            tensors.push(aug.tensors(&n.sim_state, &n.observation, env, &arch, Some(&mut rng))?);
        }
        let goal_tensors = aug.tensors(&tree.root().sim_state, goal_obs, env, &arch, None)?;
        let index_of = |node: usize| node_ids.binary_search(&node).unwrap();
        let refs: Vec<PairRef> = batch
            .iter()
            .map(|p| PairRef {
                a: index_of(p.node_a),
                b: index_of(p.node_b),
                t_a: p.t_a,
                t_b: p.t_b,
            })
            .collect();

        let mut tape = Tape::new();
        let binding = Binding::bind_all(&params, &mut tape);
        let (root, parts): (_, LossParts) = total_loss(
            &mut tape,
            &encoder,
            &decoder,
            &binding,
            &tensors,
            &goal_tensors,
            &refs,
            &cfg.triplet,
        )?;
        if !parts.total.is_finite() {
            return Err(RewardError::Divergence { iteration });
        }
        let grads = tape.backward(root)?;
        adam.step(&mut params, &grads, &binding);
        log.push(LossRow {
            iteration,
            triplet: parts.triplet,
            reconstruction: parts.reconstruction,
            total: parts.total,
        });
    }

    let latent_goal = encoder.encode(&params, goal_obs)?;
    let latent_start = encoder.encode(&params, start_obs)?;
    let denom = latent_distance(&latent_start, &latent_goal)?;
    if !(denom > 1e-12) || !denom.is_finite() {
        return Err(RewardError::DegenerateDenominator);
    }
    Ok((
        RewardModel {
            arch,
            encoder,
            decoder,
            params,
            latent_goal,
            latent_start,
            denom,
            clamp_output: true,
        },
        log,
    ))
}

/// Binary success indicator: 1 at a goal state, 0 everywhere else. The
/// sparse baseline evaluates this once, when the episode ends (episodes
/// terminate on success).
pub fn sparse_reward(state: &SimState, env: &EnvConfig) -> f64 {
    if is_goal(state, env) {
        1.0
    } else {
        0.0
    }
}

/// Handcrafted pose-distance baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineeredRewardConfig {
    pub kappa: f64,
    pub goal_pose: [f64; 3],
    /// Angle weight of the pose metric (same metric as the tree's
    /// progress measure).
    pub w_theta: f64,
    /// When set, uses the bounded decay `exp(-kappa * d)` in (0, 1]
    /// instead of the default unbounded `-exp(kappa * d)`.
    pub bounded_form: bool,
}

impl EngineeredRewardConfig {
    pub fn defaults_for(env: &EnvConfig) -> Self {
        let b = &env.workspace_bounds;
        let diag = ((b.x_max - b.x_min).powi(2) + (b.y_max - b.y_min).powi(2)).sqrt();
        EngineeredRewardConfig {
            kappa: 2.0 / diag,
            goal_pose: [env.hole_center[0], env.hole_bottom() + env.peg_half_height, 0.0],
            w_theta: crate::sampler::default_w_theta(env),
            bounded_form: false,
        }
    }
}

/// `-exp(kappa * d)` with `d` the weighted pose distance to the goal
/// pose (maximal, value -1, exactly at the goal).
pub fn engineered_reward(state: &SimState, cfg: &EngineeredRewardConfig) -> f64 {
    let dx = state.pose[0] - cfg.goal_pose[0];
    let dy = state.pose[1] - cfg.goal_pose[1];
    let dth = wrap_angle(state.pose[2] - cfg.goal_pose[2]);
    let d = (dx * dx + dy * dy + (cfg.w_theta * dth) * (cfg.w_theta * dth)).sqrt();
    if cfg.bounded_form {
        (-cfg.kappa * d).exp()
    } else {
        -(cfg.kappa * d).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{build_tree, generate_expert, sample_pairs, SamplerConfig};
    use crate::sim::{observe, reset};

    fn env() -> EnvConfig {
        let mut e = EnvConfig::peg_hole();
        e.image_size = 8;
        e
    }

    fn small_fixture() -> (EnvConfig, TaskProgressTree, Vec<TrainingPair>, Observation) {
        let e = env();
        let expert = generate_expert(&e, 11, 400).unwrap();
        let mut cfg = SamplerConfig::defaults_for(&e);
        cfg.m = 12;
        cfg.max_depth = 120;
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        let pairs = sample_pairs(&tree, 4, 40, 3).unwrap();
        let start_obs = observe(&expert.states[0], None, &e);
        (e, tree, pairs, start_obs)
    }

    fn tiny_train_cfg(iters: usize) -> TrainConfig {
        TrainConfig { iters, batch_pairs: 4, ..TrainConfig::default() }
    }

    #[test]
    fn ratio_rule_examples() {
        let r = reward_from_distances(0.3, 0.6, true);
        assert!((r.value - 0.5).abs() < 1e-12);
        let r = reward_from_distances(0.0, 0.6, true);
        assert_eq!(r.value, 1.0);
        let r = reward_from_distances(0.6, 0.6, true);
        assert_eq!(r.value, 0.0);
        // Farther than the start: clamped to 0, raw negative.
        let r = reward_from_distances(1.2, 0.6, true);
        assert_eq!(r.value, 0.0);
        assert!((r.raw + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iteration_training_yields_valid_anchors() {
        let (env, tree, pairs, start_obs) = small_fixture();
        let arch = NetArch::for_observation(8, 8, 16);
        let (model, log) =
            train_embedding(&env, &tree, &pairs, &start_obs, arch, &tiny_train_cfg(0)).unwrap();
        assert!(log.is_empty());
        assert!(model.denom > 0.0);
        let g = model.dense_reward(tree.goal_observation()).unwrap();
        assert!((g.raw - 1.0).abs() < 1e-6);
        let s = model.dense_reward(&start_obs).unwrap();
        assert!(s.raw.abs() < 1e-6);
        assert!((0.0..=1.0).contains(&g.value) && (0.0..=1.0).contains(&s.value));
    }

    #[test]
    fn short_training_is_deterministic_and_logged() {
        let (env, tree, pairs, start_obs) = small_fixture();
        let arch = NetArch::for_observation(8, 8, 16);
        let (m1, log1) =
            train_embedding(&env, &tree, &pairs, &start_obs, arch.clone(), &tiny_train_cfg(5)).unwrap();
        let (m2, log2) =
            train_embedding(&env, &tree, &pairs, &start_obs, arch, &tiny_train_cfg(5)).unwrap();
        assert_eq!(log1.len(), 5);
        assert_eq!(log1, log2);
        for (i, row) in log1.iter().enumerate() {
            assert_eq!(row.iteration, i);
            assert!(row.total.is_finite());
            assert!(
                (row.total - (row.triplet + 0.2 * row.reconstruction)).abs() < 1e-9,
                "loss components inconsistent at iteration {i}"
            );
        }
        let obs = tree.goal_observation();
        assert_eq!(m1.encoder.encode(&m1.params, obs).unwrap(), m2.encoder
            .encode(&m2.params, obs)
            .unwrap());
    }

    #[test]
    fn missing_pair_class_is_a_dataset_error() {
        let (env, tree, pairs, start_obs) = small_fixture();
        let arch = NetArch::for_observation(8, 8, 16);
        let only_near: Vec<_> = pairs.iter().filter(|p| p.neighboring).cloned().collect();
        assert!(matches!(
            train_embedding(&env, &tree, &only_near, &start_obs, arch, &tiny_train_cfg(1)),
            Err(RewardError::Dataset(_))
        ));
    }

    #[test]
    fn infinite_learning_rate_reports_divergence_iteration() {
        let (env, tree, pairs, start_obs) = small_fixture();
        let arch = NetArch::for_observation(8, 8, 16);
        let mut cfg = tiny_train_cfg(5);
        cfg.lr = f64::INFINITY;
        match train_embedding(&env, &tree, &pairs, &start_obs, arch, &cfg) {
            Err(RewardError::Divergence { iteration }) => assert!(iteration >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_rewards() {
        let (env, tree, pairs, start_obs) = small_fixture();
        let arch = NetArch::for_observation(8, 8, 16);
        let (model, _) =
            train_embedding(&env, &tree, &pairs, &start_obs, arch, &tiny_train_cfg(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reward.ckpt");
        model.save(&path).unwrap();
        let loaded = RewardModel::load(&path).unwrap();
        assert_eq!(loaded.denom, model.denom);
        let probe = &tree.nodes[tree.nodes.len() / 2].observation;
        assert_eq!(
            model.dense_reward(probe).unwrap(),
            loaded.dense_reward(probe).unwrap()
        );
    }

    #[test]
    fn sparse_reward_indicator() {
        let e = env();
        let goal = crate::sampler::goal_state(&e, 0);
        assert_eq!(sparse_reward(&goal, &e), 1.0);
        let s = reset(&e, 1).unwrap();
        assert_eq!(sparse_reward(&s, &e), 0.0);
    }

    #[test]
    fn engineered_reward_values_and_monotonicity() {
        let e = env();
        let cfg = EngineeredRewardConfig::defaults_for(&e);
        let mut goal = reset(&e, 0).unwrap();
        goal.pose = cfg.goal_pose;
        assert!((engineered_reward(&goal, &cfg) + 1.0).abs() < 1e-12);

        // kappa = 1, pure-x distance ln 2 -> -2.
        let unit = EngineeredRewardConfig { kappa: 1.0, ..cfg.clone() };
        let mut s = goal.clone();
        s.pose[0] += std::f64::consts::LN_2;
        assert!((engineered_reward(&s, &unit) + 2.0).abs() < 1e-12);

        // Strictly decreasing in distance along a ray; argmax on a grid is
        // the goal pose.
        let mut prev = engineered_reward(&goal, &cfg);
        for k in 1..20 {
            let mut s = goal.clone();
            s.pose[0] = cfg.goal_pose[0] + k as f64;
            s.pose[1] = cfg.goal_pose[1] + 0.5 * k as f64;
            let r = engineered_reward(&s, &cfg);
            assert!(r < prev);
            prev = r;
        }
        let mut best = (f64::NEG_INFINITY, [0.0; 3]);
        for i in -8..=8 {
            for j in -8..=8 {
                let mut s = goal.clone();
                s.pose[0] = cfg.goal_pose[0] + i as f64;
                s.pose[1] = cfg.goal_pose[1] + j as f64;
                let r = engineered_reward(&s, &cfg);
                if r > best.0 {
                    best = (r, s.pose);
                }
            }
        }
        assert_eq!(best.1, cfg.goal_pose);
    }
}
