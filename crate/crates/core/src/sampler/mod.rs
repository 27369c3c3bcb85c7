//! Backward sampling of a task progress tree and balanced pair datasets.
//!
//! Starting from the goal state, random actions expand a tree of states
//! that are reinterpreted as temporally *earlier* than their parents. One
//! observation-only expert trajectory, walked in reverse, scores each
//! depth's candidates; the best candidates become the next seed set. A
//! node's temporal position is its distance from the frontier, so the
//! goal sits at the far temporal end.

pub mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::sim::{
    is_goal, is_start_region, observe, step, wrap_angle, Action, EnvConfig, Observation, SimState,
};

/// Backward-sampling hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Random actions expanded per seed per depth.
    pub m: usize,
    /// Seed-set capacity (best candidates kept per depth).
    pub n: usize,
    /// Stop once at least `ceil(n * delta)` seeds are in the start region.
    pub delta: f64,
    /// Safety cap on tree depth; hitting it flags the tree as truncated.
    pub max_depth: usize,
    /// Per-axis twist magnitude range as a fraction of the action limits.
    pub action_sampler_scale: f64,
    /// Probability of forcing the sampled vertical twist upward, which
    /// biases expansion toward retraction out of the hole.
    pub retraction_bias: f64,
    /// Weight on the angular term of the pose-distance progress measure.
    pub w_theta: f64,
    /// Extra depths expanded after the stop condition first holds, so the
    /// frontier covers the whole reset band rather than stopping at the
    /// start-region boundary.
    pub frontier_margin: usize,
    pub rng_seed: u64,
}

impl SamplerConfig {
    /// Full-scale defaults with the angle weight derived from the
    /// workspace: `w_theta = 0.1 * diagonal / pi`.
    pub fn defaults_for(env: &EnvConfig) -> Self {
        SamplerConfig {
            m: 500,
            n: 1,
            delta: 0.5,
            max_depth: 200,
            action_sampler_scale: 1.0,
            retraction_bias: 0.5,
            w_theta: default_w_theta(env),
            frontier_margin: 8,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.m < 1 || self.n < 1 || self.max_depth < 1 {
            return Err(SamplerError::InvalidConfig(
                "m, n, and max_depth must all be >= 1".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(0.0..=1.0).contains(&self.retraction_bias) || self.action_sampler_scale <= 0.0 {
            return Err(SamplerError::InvalidConfig(
                "retraction_bias must be in [0,1] and action_sampler_scale > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::defaults_for(&EnvConfig::default())
    }
}

pub fn default_w_theta(env: &EnvConfig) -> f64 {
    let b = &env.workspace_bounds;
    let diag = ((b.x_max - b.x_min).powi(2) + (b.y_max - b.y_min).powi(2)).sqrt();
    0.1 * diag / std::f64::consts::PI
}

/// Observation-only expert demonstration, ordered start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTrajectory {
    pub states: Vec<SimState>,
}

impl ExpertTrajectory {
    pub fn validate(&self, env: &EnvConfig) -> Result<(), SamplerError> {
        if self.states.len() < 2 {
            return Err(SamplerError::InvalidExpert(format!(
                "need at least 2 states, got {}",
                self.states.len()
            )));
        }
        if !is_start_region(self.states.first().unwrap(), env) {
            return Err(SamplerError::InvalidExpert(
                "first state is not in the start region".into(),
            ));
        }
        if !is_goal(self.states.last().unwrap(), env) {
            return Err(SamplerError::InvalidExpert(
                "last state does not satisfy the goal predicate".into(),
            ));
        }
        Ok(())
    }
}

/// One node of the task progress tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressNode {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    /// Reversed temporal position: root (goal) has depth 0.
    pub depth: usize,
    pub sim_state: SimState,
    #[serde(skip)]
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProgressTree {
    pub nodes: Vec<ProgressNode>,
    pub terminal_depth: usize,
    /// Seed set `Q^d` per depth, as node ids.
    pub seeds_per_depth: Vec<Vec<usize>>,
    /// True when `max_depth` was hit before the stop condition.
    pub truncated: bool,
    pub config: SamplerConfig,
}

impl TaskProgressTree {
    pub fn root(&self) -> &ProgressNode {
        &self.nodes[0]
    }

    pub fn goal_observation(&self) -> &Observation {
        &self.nodes[0].observation
    }
}

/// Weighted pose distance between two states: lower means the candidate
/// is closer to the reference. The angle difference is wrapped to
/// `(-pi, pi]` before weighting.
pub fn progress_measure(candidate: &SimState, reference: &SimState, w_theta: f64) -> f64 {
    let dx = candidate.pose[0] - reference.pose[0];
    let dy = candidate.pose[1] - reference.pose[1];
    let dth = wrap_angle(candidate.pose[2] - reference.pose[2]);
    (dx * dx + dy * dy + (w_theta * dth) * (w_theta * dth)).sqrt()
}

/// Hook for task-agnostic progress scoring. Only the pose-difference
/// measure is provided.
pub trait ProgressScorer {
    fn score(&self, candidate: &SimState, reference: &SimState) -> f64;
}

/// Default scorer: [`progress_measure`] with a fixed angle weight.
pub struct PoseDistanceScorer {
    pub w_theta: f64,
}

impl ProgressScorer for PoseDistanceScorer {
    fn score(&self, candidate: &SimState, reference: &SimState) -> f64 {
        progress_measure(candidate, reference, self.w_theta)
    }
}

fn sample_action(env: &EnvConfig, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Action {
    let mut twist = [0.0; 3];
    for i in 0..3 {
        let lim = env.action_limits[i] * cfg.action_sampler_scale;
        twist[i] = rng.gen_range(-lim..=lim);
    }
    if rng.gen_bool(cfg.retraction_bias) {
        twist[1] = twist[1].abs();
    }
    Action::clamped(twist, env)
}

/// Builds the task progress tree by backward sampling from the expert's
/// goal state.
pub fn build_tree(
    env: &EnvConfig,
    expert: &ExpertTrajectory,
    cfg: &SamplerConfig,
) -> Result<TaskProgressTree, SamplerError> {
    cfg.validate()?;
    expert.validate(env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let n_e = expert.states.len();

    let root_state = expert.states.last().unwrap().clone();
    let root_obs = observe(&root_state, None, env);
    let mut nodes = vec![ProgressNode {
        node_id: 0,
        parent_id: None,
        depth: 0,
        sim_state: root_state,
        observation: root_obs,
    }];
    let mut seeds_per_depth = vec![vec![0usize]];
    let stop_count = (cfg.n as f64 * cfg.delta).ceil() as usize;
    let mut depth = 0usize;
    let mut truncated = false;
    let mut margin_left: Option<usize> = None;

    loop {
        let seeds = seeds_per_depth.last().unwrap().clone();
        let in_start = seeds
            .iter()
            .filter(|id| is_start_region(&nodes[**id].sim_state, env))
            .count();
        if in_start >= stop_count {
            // Stop condition holds; expand `frontier_margin` extra depths
            // so the frontier blankets the reset band.
            let left = margin_left.get_or_insert(cfg.frontier_margin);
            if *left == 0 {
                break;
            }
            *left -= 1;
        }
        if depth == cfg.max_depth {
            truncated = true;
            break;
        }

        // Step 2: expand every seed with M random actions.
        let child_depth = depth + 1;
        let mut child_ids = Vec::with_capacity(seeds.len() * cfg.m);
        for seed_id in &seeds {
            for _ in 0..cfg.m {
                let action = sample_action(env, cfg, &mut rng);
                let state = step(&nodes[*seed_id].sim_state, &action, env);
                let obs = observe(&state, Some(&nodes[*seed_id].observation), env);
                let node_id = nodes.len();
                nodes.push(ProgressNode {
                    node_id,
                    parent_id: Some(*seed_id),
                    depth: child_depth,
                    sim_state: state,
                    observation: obs,
                });
                child_ids.push(node_id);
            }
        }

        // Step 3: score against the reversed expert state, index clamped
        // to the expert's start once the tree outgrows the demonstration.
        let ref_state = &expert.states[n_e - 1 - child_depth.min(n_e - 1)];
        let mut scored: Vec<(f64, usize)> = child_ids
            .iter()
            .map(|id| (progress_measure(&nodes[*id].sim_state, ref_state, cfg.w_theta), *id))
            .collect();
        // Step 4: keep the N best; ties resolved by lowest node id.
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let next: Vec<usize> = scored.iter().take(cfg.n).map(|(_, id)| *id).collect();
        seeds_per_depth.push(next);
        depth = child_depth;
    }

    Ok(TaskProgressTree {
        terminal_depth: nodes.iter().map(|n| n.depth).max().unwrap_or(0),
        nodes,
        seeds_per_depth,
        truncated,
        config: cfg.clone(),
    })
}

/// Temporal position of a node: `t = terminal_depth - depth`, so the
/// goal has the largest t and the frontier has t = 0.
pub fn temporal_position(node: &ProgressNode, tree: &TaskProgressTree) -> i64 {
    tree.terminal_depth as i64 - node.depth as i64
}

/// One labeled pair of tree nodes for embedding training. Observations
/// live in the tree; pairs reference them by node id. The goal
/// observation is the tree root's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub node_a: usize,
    pub node_b: usize,
    pub t_a: i64,
    pub t_b: i64,
    pub neighboring: bool,
}

impl TrainingPair {
    pub fn obs_a<'t>(&self, tree: &'t TaskProgressTree) -> &'t Observation {
        &tree.nodes[self.node_a].observation
    }

    pub fn obs_b<'t>(&self, tree: &'t TaskProgressTree) -> &'t Observation {
        &tree.nodes[self.node_b].observation
    }
}

/// Uniformly samples node pairs until both classes are full: `count/2`
/// temporally neighboring pairs (`t_b - t_a <= epsilon`) and `count/2`
/// non-neighboring pairs. Pairs are normalized so `t_a <= t_b`; equal
/// temporal positions only occur in the neighboring class.
pub fn sample_pairs(
    tree: &TaskProgressTree,
    epsilon: i64,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<TrainingPair>, SamplerError> {
    if count == 0 || count % 2 != 0 {
        return Err(SamplerError::InvalidConfig(format!(
            "pair count must be positive and even, got {count}"
        )));
    }
    let positions: std::collections::BTreeSet<i64> =
        tree.nodes.iter().map(|n| temporal_position(n, tree)).collect();
    if positions.len() < 2 {
        return Err(SamplerError::InvalidExpert(
            "tree has fewer than 2 distinct temporal positions".into(),
        ));
    }
    if (tree.terminal_depth as i64) <= epsilon {
        return Err(SamplerError::ClassUnsatisfiable { class: "non-neighboring" });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let per_class = count / 2;
    let mut neighboring = Vec::with_capacity(per_class);
    let mut distant = Vec::with_capacity(per_class);
    while neighboring.len() < per_class || distant.len() < per_class {
        let i = rng.gen_range(0..tree.nodes.len());
        let j = rng.gen_range(0..tree.nodes.len());
        if i == j {
            continue;
        }
        let (ti, tj) = (
            temporal_position(&tree.nodes[i], tree),
            temporal_position(&tree.nodes[j], tree),
        );
        let (a, b, t_a, t_b) = if ti <= tj { (i, j, ti, tj) } else { (j, i, tj, ti) };
        let near = t_b - t_a <= epsilon;
        let bucket = if near { &mut neighboring } else { &mut distant };
        if bucket.len() < per_class {
            bucket.push(TrainingPair { node_a: a, node_b: b, t_a, t_b, neighboring: near });
        }
    }
    neighboring.extend(distant);
    Ok(neighboring)
}

/// Resets the environment, then drives a privileged proportional
/// controller to the hole to produce an expert demonstration at the
/// policy rate. Returns an error if the goal is not reached in
/// `max_steps` actions.
pub fn generate_expert(
    env: &EnvConfig,
    seed: u64,
    max_steps: usize,
) -> Result<ExpertTrajectory, SamplerError> {
    let mut state = crate::sim::reset(env, seed)
        .map_err(|e| SamplerError::InvalidConfig(e.to_string()))?;
    let mut states = vec![state.clone()];
    for _ in 0..max_steps {
        if is_goal(&state, env) {
            return Ok(ExpertTrajectory { states });
        }
        let a = expert_action(&state, env);
        state = step(&state, &a, env);
        states.push(state.clone());
    }
    if is_goal(&state, env) {
        return Ok(ExpertTrajectory { states });
    }
    Err(SamplerError::InvalidExpert(format!(
        "privileged controller failed to reach the goal within {max_steps} steps"
    )))
}

/// Privileged proportional controller: approach above the hole while
/// descending slowly, full descent once laterally aligned, pure descent
/// inside the hole. The rotation command is a PD law (the body's angular
/// tracking is slow, a pure P gain overshoots and oscillates), and the
/// vertical command never points up while above the hole mouth, so the
/// trajectory makes monotone progress toward the goal.
pub fn expert_action(state: &SimState, env: &EnvConfig) -> Action {
    let dx = env.hole_center[0] - state.pose[0];
    let dth = wrap_angle(-state.pose[2]);
    let clearance_y = env.hole_center[1] + env.peg_half_height + 1.0;
    let om = 2.0 * dth - 0.7 * state.twist[2];
    let laterally_aligned = dx.abs() < 0.25 * env.clearance;
    let (vx, vy);
    if state.pose[1] > clearance_y && !laterally_aligned {
        // Approach: translate toward the hole axis, drifting downward.
        // Lateral speed stays below the limit so backward sampling can
        // retrace this leg with random actions.
        vx = (4.0 * dx).clamp(-0.7 * env.action_limits[0], 0.7 * env.action_limits[0]);
        vy = -env.action_limits[1] * 0.15;
    } else if laterally_aligned {
        vx = 2.0 * dx;
        vy = -env.action_limits[1] * 0.6;
    } else {
        // Misaligned below the mouth: retract before translating.
        vx = 2.0 * dx;
        vy = env.action_limits[1] * 0.5;
    }
    Action::clamped([vx, vy, om], env)
}

/// Convenience wrapper used by tests and examples: goal state of a
/// config, with deterministic colors.
pub fn goal_state(env: &EnvConfig, seed: u64) -> SimState {
    let mut s = crate::sim::reset(env, seed).unwrap();
    s.pose = [env.hole_center[0], env.hole_bottom() + env.peg_half_height, 0.0];
    s.twist = [0.0; 3];
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn env() -> EnvConfig {
        let mut e = EnvConfig::peg_hole();
        e.image_size = 8;
        e
    }

    fn small_cfg(env: &EnvConfig) -> SamplerConfig {
        let mut c = SamplerConfig::defaults_for(env);
        c.m = 24;
        c.max_depth = 120;
        c
    }

    fn state_at(pose: [f64; 3], env: &EnvConfig) -> SimState {
        let mut s = crate::sim::reset(env, 0).unwrap();
        s.pose = pose;
        s.twist = [0.0; 3];
        s
    }

    #[test]
    fn progress_measure_basics() {
        let e = env();
        let a = state_at([1.0, 2.0, 0.3], &e);
        assert_eq!(progress_measure(&a, &a, 2.0), 0.0);
        let b = state_at([1.0, 2.0, 0.3 + 2.0 * PI], &e);
        assert!(progress_measure(&a, &b, 2.0) < 1e-9);
        let c = state_at([4.0, 6.0, 0.3], &e);
        assert!((progress_measure(&a, &c, 2.0) - 5.0).abs() < 1e-12);
    }

    fn make_expert(e: &EnvConfig) -> ExpertTrajectory {
        generate_expert(e, 11, 400).unwrap()
    }

    #[test]
    fn expert_controller_reaches_goal_from_many_seeds() {
        let e = env();
        for seed in 0..10 {
            let traj = generate_expert(&e, seed, 400).unwrap();
            assert!(is_goal(traj.states.last().unwrap(), &e), "seed {seed}");
            assert!(is_start_region(&traj.states[0], &e));
        }
    }

    #[test]
    fn expert_validation_rejects_bad_trajectories() {
        let e = env();
        let goal = goal_state(&e, 0);
        let t = ExpertTrajectory { states: vec![goal.clone()] };
        assert!(matches!(t.validate(&e), Err(SamplerError::InvalidExpert(_))));
        let t = ExpertTrajectory { states: vec![goal.clone(), goal] };
        assert!(matches!(t.validate(&e), Err(SamplerError::InvalidExpert(_))));
    }

    #[test]
    fn tree_root_is_goal_and_depths_match_path_length() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        assert_eq!(tree.root().depth, 0);
        assert_eq!(tree.root().sim_state.pose, expert.states.last().unwrap().pose);
        assert!(!tree.truncated, "tree hit max_depth");
        for node in &tree.nodes {
            // Walk to the root and compare path length to stored depth.
            let mut hops = 0;
            let mut cur = node;
            while let Some(p) = cur.parent_id {
                cur = &tree.nodes[p];
                hops += 1;
            }
            assert_eq!(hops, node.depth);
        }
        // Frontier seed ends in the start region.
        let last = tree.seeds_per_depth.last().unwrap();
        assert!(last.iter().any(|id| is_start_region(&tree.nodes[*id].sim_state, &e)));
    }

    #[test]
    fn selected_seed_is_argmin_over_full_rescan() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        let n_e = expert.states.len();
        for d in 1..tree.seeds_per_depth.len() {
            let reference = &expert.states[n_e - 1 - d.min(n_e - 1)];
            let chosen = tree.seeds_per_depth[d][0];
            let best = tree
                .nodes
                .iter()
                .filter(|n| n.depth == d)
                .min_by(|a, b| {
                    progress_measure(&a.sim_state, reference, cfg.w_theta)
                        .total_cmp(&progress_measure(&b.sim_state, reference, cfg.w_theta))
                        .then(a.node_id.cmp(&b.node_id))
                })
                .unwrap();
            assert_eq!(chosen, best.node_id, "depth {d}");
        }
    }

    #[test]
    fn child_count_per_expanded_seed_is_m() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        for d in 0..tree.seeds_per_depth.len() - 1 {
            for seed in &tree.seeds_per_depth[d] {
                let kids = tree.nodes.iter().filter(|n| n.parent_id == Some(*seed)).count();
                assert_eq!(kids, cfg.m, "seed {seed} at depth {d}");
            }
        }
    }

    #[test]
    fn build_tree_is_deterministic() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let t1 = build_tree(&e, &expert, &cfg).unwrap();
        let t2 = build_tree(&e, &expert, &cfg).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn max_depth_truncates_with_flag() {
        let e = env();
        let expert = make_expert(&e);
        let mut cfg = small_cfg(&e);
        cfg.max_depth = 2;
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        assert!(tree.truncated);
        assert_eq!(tree.terminal_depth, 2);
    }

    #[test]
    fn temporal_positions_goal_high_frontier_zero() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        assert_eq!(temporal_position(tree.root(), &tree), tree.terminal_depth as i64);
        let frontier = tree.nodes.iter().find(|n| n.depth == tree.terminal_depth).unwrap();
        assert_eq!(temporal_position(frontier, &tree), 0);
        for n in &tree.nodes {
            if let Some(p) = n.parent_id {
                assert_eq!(
                    temporal_position(&tree.nodes[p], &tree) - temporal_position(n, &tree),
                    1
                );
            }
        }
    }

    #[test]
    fn pairs_are_balanced_and_consistent() {
        let e = env();
        let expert = make_expert(&e);
        let cfg = small_cfg(&e);
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        let pairs = sample_pairs(&tree, 4, 100, 7).unwrap();
        assert_eq!(pairs.len(), 100);
        let near = pairs.iter().filter(|p| p.neighboring).count();
        assert_eq!(near, 50);
        for p in &pairs {
            assert!(p.t_a < p.t_b || (p.t_a == p.t_b && p.neighboring));
            assert_eq!(p.neighboring, p.t_b - p.t_a <= 4);
        }
        assert_eq!(pairs, sample_pairs(&tree, 4, 100, 7).unwrap());
        assert_ne!(pairs, sample_pairs(&tree, 4, 100, 8).unwrap());
    }

    #[test]
    fn shallow_tree_makes_distant_class_unsatisfiable() {
        let e = env();
        let expert = make_expert(&e);
        let mut cfg = small_cfg(&e);
        cfg.max_depth = 1;
        let tree = build_tree(&e, &expert, &cfg).unwrap();
        assert_eq!(tree.terminal_depth, 1);
        assert!(matches!(
            sample_pairs(&tree, 4, 10, 0),
            Err(SamplerError::ClassUnsatisfiable { class: "non-neighboring" })
        ));
    }

    #[test]
    fn odd_pair_count_rejected() {
        let e = env();
        let expert = make_expert(&e);
        let tree = build_tree(&e, &expert, &small_cfg(&e)).unwrap();
        assert!(matches!(
            sample_pairs(&tree, 4, 11, 0),
            Err(SamplerError::InvalidConfig(_))
        ));
    }
}
