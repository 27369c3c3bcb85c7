//! Deterministic planar insertion simulator.
//!
//! The world is 2-D plus rotation: a controller-held rectangular peg above
//! a fixture block with a vertical cavity (hole or tight slot). Dynamics
//! are damped operational-space velocity tracking plus penalty contact, so
//! the contact phenomenology of insertion (jamming, alignment, contact
//! loss) is preserved at desk scale. All transitions and rendering are
//! pure functions of `(state, action, config)`.

pub mod io;
pub mod render;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    PegHole,
    Slot,
}

/// Axis-aligned workspace box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn diagonal(&self) -> f64 {
        let dx = self.x_max - self.x_min;
        let dy = self.y_max - self.y_min;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub task_kind: TaskKind,
    /// Lateral clearance between peg and cavity (length units; 1 unit = 1 mm).
    pub clearance: f64,
    /// (x of the cavity axis, y of the fixture top surface).
    pub hole_center: [f64; 2],
    pub peg_half_width: f64,
    pub peg_half_height: f64,
    /// Half-width of the fixture block; sliding past its edge loses contact.
    pub fixture_half_width: f64,
    /// Cavity depth below the fixture top.
    pub hole_depth: f64,
    pub workspace_bounds: Bounds,
    /// Start region: every pose with y >= this threshold (closed boundary).
    pub start_height_threshold: f64,
    /// Reset heights are drawn from `[threshold, threshold + band]`; the
    /// start *region* extends to the workspace top, but episodes begin in
    /// this narrower band.
    pub start_height_band: f64,
    /// Inner-loop timestep in seconds (100 Hz).
    pub dt_control: f64,
    /// Inner steps per action, so actions apply at 5 Hz by default.
    pub substeps_per_action: u32,
    /// Diagonal entries of the positive-diagonal damping gain K_D.
    pub gain_kd: [f64; 3],
    pub mass: f64,
    pub inertia: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_mu: f64,
    /// Position projection cap on penetration depth.
    pub penetration_cap: f64,
    /// Square image edge length in pixels for both camera views.
    pub image_size: usize,
    pub ft_history_len: usize,
    /// Per-channel uniform color perturbation half-range applied at reset.
    pub color_seed_range: f64,
    /// World extent covered by the wrist camera window.
    pub wrist_view_extent: f64,
    /// Symmetric action limits (vx, vy, omega).
    pub action_limits: [f64; 3],
    /// Goal predicate: minimum peg-tip depth below the fixture top.
    pub insertion_depth_min: f64,
    /// Goal predicate: angular tolerance around upright (radians).
    pub theta_goal_tol: f64,
    /// Reset: initial orientation range around upright (radians).
    pub theta_init_range: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::peg_hole()
    }
}

impl EnvConfig {
    pub fn peg_hole() -> Self {
        EnvConfig {
            task_kind: TaskKind::PegHole,
            // At 32 px over a 64-unit workspace the fixed camera resolves 2
            // units per pixel, so the default clearance is kept comfortably
            // above one pixel to stay visually resolvable; tighter fits are
            // available by overriding `clearance` (see `slot`).
            clearance: 6.0,
            hole_center: [0.0, 20.0],
            peg_half_width: 5.0,
            peg_half_height: 10.0,
            fixture_half_width: 16.0,
            hole_depth: 12.0,
            workspace_bounds: Bounds { x_min: -32.0, x_max: 32.0, y_min: 0.0, y_max: 64.0 },
            start_height_threshold: 40.0,
            start_height_band: 4.0,
            dt_control: 0.01,
            substeps_per_action: 20,
            gain_kd: [100.0, 100.0, 100.0],
            mass: 5.0,
            inertia: 150.0,
            contact_stiffness: 1e4,
            contact_damping: 50.0,
            friction_mu: 0.3,
            penetration_cap: 0.5,
            image_size: 32,
            ft_history_len: 8,
            color_seed_range: 0.1,
            wrist_view_extent: 48.0,
            action_limits: [6.0, 6.0, 1.5],
            insertion_depth_min: 8.0,
            theta_goal_tol: 0.3,
            theta_init_range: 0.3,
        }
    }

    /// Tight-clearance slot ("USB-like") task.
    pub fn slot() -> Self {
        EnvConfig { task_kind: TaskKind::Slot, clearance: 1.0, ..Self::peg_hole() }
    }

    pub fn hole_half_width(&self) -> f64 {
        self.peg_half_width + self.clearance / 2.0
    }

    pub fn hole_bottom(&self) -> f64 {
        self.hole_center[1] - self.hole_depth
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.clearance <= 0.0 {
            return Err(SimError::InvalidConfig("clearance must be > 0".into()));
        }
        if self.substeps_per_action < 1 {
            return Err(SimError::InvalidConfig("substeps_per_action must be >= 1".into()));
        }
        if self.gain_kd.iter().any(|k| *k <= 0.0) {
            return Err(SimError::InvalidConfig("gain_kd entries must be > 0".into()));
        }
        if self.image_size < 8 {
            return Err(SimError::InvalidConfig("image_size must be >= 8".into()));
        }
        if self.ft_history_len < 1 {
            return Err(SimError::InvalidConfig("ft_history_len must be >= 1".into()));
        }
        if self.mass <= 0.0 || self.inertia <= 0.0 {
            return Err(SimError::InvalidConfig("mass and inertia must be > 0".into()));
        }
        if self.start_height_band <= 0.0 {
            return Err(SimError::InvalidConfig("start_height_band must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-body flat shading colors, perturbed at reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectColors {
    pub background: [f64; 3],
    pub fixture: [f64; 3],
    pub peg: [f64; 3],
}

impl ObjectColors {
    pub fn base() -> Self {
        ObjectColors {
            background: [0.10, 0.10, 0.16],
            fixture: [0.55, 0.38, 0.20],
            peg: [0.20, 0.50, 0.80],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub position: [f64; 2],
    /// Outward normal of the fixture surface at the contact.
    pub normal: [f64; 2],
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// (x, y, theta) of the held peg center.
    pub pose: [f64; 3],
    /// (vx, vy, omega).
    pub twist: [f64; 3],
    pub contact_points: Vec<ContactPoint>,
    pub object_colors: ObjectColors,
    pub step_count: u64,
}

/// Twist command, clamped to the configured symmetric limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub twist_cmd: [f64; 3],
}

impl Action {
    pub fn clamped(twist: [f64; 3], cfg: &EnvConfig) -> Self {
        let mut t = twist;
        for i in 0..3 {
            t[i] = t[i].clamp(-cfg.action_limits[i], cfg.action_limits[i]);
        }
        Action { twist_cmd: t }
    }

    pub fn zero() -> Self {
        Action { twist_cmd: [0.0; 3] }
    }
}

/// Multimodal sensor tuple. Images are stored as quantized bytes
/// (value = byte / 255) in row-major `[H][W][3]` order; `ft_history`
/// row 0 is the oldest reading.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub fixed_image: Vec<u8>,
    pub wrist_image: Vec<u8>,
    pub ft_history: Vec<[f64; 3]>,
    pub image_size: usize,
}

impl Observation {
    pub fn fixed_f64(&self) -> Vec<f64> {
        self.fixed_image.iter().map(|b| *b as f64 / 255.0).collect()
    }

    pub fn wrist_f64(&self) -> Vec<f64> {
        self.wrist_image.iter().map(|b| *b as f64 / 255.0).collect()
    }

    pub fn ft_flat(&self) -> Vec<f64> {
        self.ft_history.iter().flat_map(|r| r.iter().copied()).collect()
    }
}

pub fn reset(config: &EnvConfig, seed: u64) -> Result<SimState, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &config.workspace_bounds;
    let margin = config.peg_half_width.max(config.peg_half_height);
    let x = rng.gen_range((b.x_min + margin)..(b.x_max - margin));
    let y_hi = (b.y_max - margin)
        .min(config.start_height_threshold + config.start_height_band)
        .max(config.start_height_threshold + 1.0);
    let y = rng.gen_range(config.start_height_threshold..y_hi);
    let theta = rng.gen_range(-config.theta_init_range..config.theta_init_range);
    let r = config.color_seed_range;
    let base = ObjectColors::base();
    let mut perturb = |c: [f64; 3]| -> [f64; 3] {
        let mut out = c;
        for v in out.iter_mut() {
            *v = (*v + rng.gen_range(-r..r)).clamp(0.0, 1.0);
        }
        out
    };
    let colors = ObjectColors {
        background: perturb(base.background),
        fixture: perturb(base.fixture),
        peg: perturb(base.peg),
    };
    Ok(SimState {
        pose: [x, y, theta],
        twist: [0.0; 3],
        contact_points: Vec::new(),
        object_colors: colors,
        step_count: 0,
    })
}

/// Peg sample points in body frame: four corners plus the bottom edge
/// midpoint (the insertion tip).
fn peg_points(cfg: &EnvConfig) -> [[f64; 2]; 5] {
    let (w, h) = (cfg.peg_half_width, cfg.peg_half_height);
    [[-w, -h], [w, -h], [-w, h], [w, h], [0.0, -h]]
}

fn rotate(p: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Solid fixture boxes: left shoulder, right shoulder, cavity bottom slab.
fn fixture_solids(cfg: &EnvConfig) -> [[f64; 4]; 3] {
    let hx = cfg.hole_center[0];
    let top = cfg.hole_center[1];
    let hw = cfg.hole_half_width();
    let bw = cfg.fixture_half_width;
    [
        [hx - bw, hx - hw, 0.0, top],
        [hx + hw, hx + bw, 0.0, top],
        [hx - hw, hx + hw, 0.0, cfg.hole_bottom()],
    ]
}

/// Is a world point inside any fixture solid? Used by the rasterizer.
pub(crate) fn point_in_fixture(p: [f64; 2], cfg: &EnvConfig) -> bool {
    fixture_solids(cfg)
        .iter()
        .any(|b| p[0] >= b[0] && p[0] <= b[1] && p[1] >= b[2] && p[1] <= b[3])
}

/// Minimum-exit-face penetration for a point in a box. The floor face
/// (y = 0) is excluded; bodies never approach it from below.
fn box_penetration(p: [f64; 2], b: &[f64; 4]) -> Option<([f64; 2], f64)> {
    if p[0] <= b[0] || p[0] >= b[1] || p[1] <= b[2] || p[1] >= b[3] {
        return None;
    }
    let top = (b[3] - p[1], [0.0, 1.0]);
    let left = (p[0] - b[0], [-1.0, 0.0]);
    let right = (b[1] - p[0], [1.0, 0.0]);
    let mut best = top;
    if left.0 < best.0 {
        best = left;
    }
    if right.0 < best.0 {
        best = right;
    }
    Some((best.1, best.0))
}

pub(crate) fn detect_contacts(pose: [f64; 3], cfg: &EnvConfig) -> Vec<ContactPoint> {
    let solids = fixture_solids(cfg);
    let mut out = Vec::new();
    for bp in peg_points(cfg) {
        let r = rotate(bp, pose[2]);
        let p = [pose[0] + r[0], pose[1] + r[1]];
        let mut best: Option<([f64; 2], f64)> = None;
        for b in &solids {
            if let Some((n, d)) = box_penetration(p, b) {
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((n, d));
                }
            }
        }
        if let Some((normal, depth)) = best {
            out.push(ContactPoint { position: p, normal, depth });
        }
    }
    out
}

/// Force and torque a single contact point exerts on the peg, given the
/// body twist. Penalty normal force (stiffness + damping, clamped
/// non-negative) plus Coulomb-capped tangential friction.
fn contact_force(cp: &ContactPoint, pose: [f64; 3], twist: [f64; 3], cfg: &EnvConfig) -> [f64; 3] {
    let r = [cp.position[0] - pose[0], cp.position[1] - pose[1]];
    let vp = [twist[0] - twist[2] * r[1], twist[1] + twist[2] * r[0]];
    let n = cp.normal;
    let vn = vp[0] * n[0] + vp[1] * n[1];
    let fn_mag = (cfg.contact_stiffness * cp.depth - cfg.contact_damping * vn).max(0.0);
    let t = [-n[1], n[0]];
    let vt = vp[0] * t[0] + vp[1] * t[1];
    let cap = cfg.friction_mu * fn_mag;
    let ft_mag = (-cfg.contact_damping * vt).clamp(-cap, cap);
    let f = [n[0] * fn_mag + t[0] * ft_mag, n[1] * fn_mag + t[1] * ft_mag];
    let tau = r[0] * f[1] - r[1] * f[0];
    [f[0], f[1], tau]
}

/// Sum of contact forces on the peg in world frame plus torque about the
/// peg center.
fn total_contact_wrench(state: &SimState, cfg: &EnvConfig) -> [f64; 3] {
    let mut w = [0.0; 3];
    for cp in &state.contact_points {
        let f = contact_force(cp, state.pose, state.twist, cfg);
        w[0] += f[0];
        w[1] += f[1];
        w[2] += f[2];
    }
    w
}

/// Applies one action: `substeps_per_action` inner steps of damped
/// velocity tracking with penalty contact, semi-implicit Euler, a
/// penetration projection cap, and saturation at the workspace bounds.
pub fn step(state: &SimState, action: &Action, cfg: &EnvConfig) -> SimState {
    let dt = cfg.dt_control;
    let mut pose = state.pose;
    let mut twist = state.twist;
    let mut contacts = state.contact_points.clone();
    for _ in 0..cfg.substeps_per_action {
        let probe = SimState { pose, twist, contact_points: contacts, ..state.clone() };
        let fc = total_contact_wrench(&probe, cfg);
        let mut force = [0.0; 3];
        for i in 0..3 {
            force[i] = -cfg.gain_kd[i] * (twist[i] - action.twist_cmd[i]) + fc[i];
        }
        twist[0] += dt * force[0] / cfg.mass;
        twist[1] += dt * force[1] / cfg.mass;
        twist[2] += dt * force[2] / cfg.inertia;
        pose[0] += dt * twist[0];
        pose[1] += dt * twist[1];
        pose[2] += dt * twist[2];
        saturate_bounds(&mut pose, &mut twist, cfg);
        contacts = detect_contacts(pose, cfg);
        project_penetration(&mut pose, &mut contacts, cfg);
    }
    SimState {
        pose,
        twist,
        contact_points: contacts,
        object_colors: state.object_colors,
        step_count: state.step_count + 1,
    }
}

fn saturate_bounds(pose: &mut [f64; 3], twist: &mut [f64; 3], cfg: &EnvConfig) {
    let b = &cfg.workspace_bounds;
    if pose[0] < b.x_min {
        pose[0] = b.x_min;
        twist[0] = twist[0].max(0.0);
    }
    if pose[0] > b.x_max {
        pose[0] = b.x_max;
        twist[0] = twist[0].min(0.0);
    }
    if pose[1] < b.y_min {
        pose[1] = b.y_min;
        twist[1] = twist[1].max(0.0);
    }
    if pose[1] > b.y_max {
        pose[1] = b.y_max;
        twist[1] = twist[1].min(0.0);
    }
    pose[2] = wrap_angle(pose[2]);
}

/// Pushes the body out along the deepest contact normal so no penetration
/// exceeds the cap. A few iterations are enough for shallow contacts.
fn project_penetration(pose: &mut [f64; 3], contacts: &mut Vec<ContactPoint>, cfg: &EnvConfig) {
    for _ in 0..3 {
        let Some(worst) = contacts
            .iter()
            .filter(|c| c.depth > cfg.penetration_cap)
            .max_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap())
        else {
            return;
        };
        let excess = worst.depth - cfg.penetration_cap;
        pose[0] += worst.normal[0] * excess;
        pose[1] += worst.normal[1] * excess;
        *contacts = detect_contacts(*pose, cfg);
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
        - std::f64::consts::PI;
    if t == -std::f64::consts::PI {
        t = std::f64::consts::PI;
    }
    t
}

/// Net contact force/torque on the peg expressed in the wrist frame:
/// `(Fx, Fy, tau_z)`. Zero when the contact set is empty.
pub fn ft_reading(state: &SimState, cfg: &EnvConfig) -> [f64; 3] {
    let w = total_contact_wrench(state, cfg);
    let f = rotate([w[0], w[1]], -state.pose[2]);
    [f[0], f[1], w[2]]
}

/// Renders both views and appends the current F/T reading to the rolling
/// history (zero-padded when no previous observation exists).
pub fn observe(state: &SimState, prev: Option<&Observation>, cfg: &EnvConfig) -> Observation {
    let fixed_image = render::render_fixed(state, cfg);
    let wrist_image = render::render_wrist(state, cfg);
    let reading = ft_reading(state, cfg);
    let n = cfg.ft_history_len;
    let mut ft_history = match prev {
        Some(p) => {
            debug_assert_eq!(p.ft_history.len(), n);
            let mut h = p.ft_history.clone();
            h.remove(0);
            h
        }
        None => vec![[0.0; 3]; n - 1],
    };
    ft_history.push(reading);
    Observation { fixed_image, wrist_image, ft_history, image_size: cfg.image_size }
}

/// Depth of the peg tip below the fixture top surface.
pub fn tip_depth(state: &SimState, cfg: &EnvConfig) -> f64 {
    let tip = rotate([0.0, -cfg.peg_half_height], state.pose[2]);
    cfg.hole_center[1] - (state.pose[1] + tip[1])
}

/// Sparse goal predicate: tip inserted deep enough, laterally within half
/// the clearance, and near upright.
pub fn is_goal(state: &SimState, cfg: &EnvConfig) -> bool {
    let lateral = (state.pose[0] - cfg.hole_center[0]).abs();
    tip_depth(state, cfg) >= cfg.insertion_depth_min
        && lateral < cfg.clearance / 2.0
        && wrap_angle(state.pose[2]).abs() < cfg.theta_goal_tol
}

/// Start-region predicate; the boundary is closed (y == threshold counts).
pub fn is_start_region(state: &SimState, cfg: &EnvConfig) -> bool {
    state.pose[1] >= cfg.start_height_threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let cfg = EnvConfig::peg_hole();
        let a = reset(&cfg, 42).unwrap();
        let b = reset(&cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reset_starts_in_start_region() {
        let cfg = EnvConfig::peg_hole();
        for seed in 0..1000 {
            let s = reset(&cfg, seed).unwrap();
            assert!(s.pose[1] >= cfg.start_height_threshold, "seed {seed}");
            assert!(is_start_region(&s, &cfg));
        }
    }

    #[test]
    fn reset_perturbs_colors_across_seeds() {
        let cfg = EnvConfig::peg_hole();
        let base = reset(&cfg, 0).unwrap();
        let differing = (1..100)
            .filter(|s| reset(&cfg, *s).unwrap().object_colors != base.object_colors)
            .count();
        assert!(differing > 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = EnvConfig::peg_hole();
        cfg.clearance = 0.0;
        assert!(reset(&cfg, 0).is_err());
    }

    #[test]
    fn zero_command_from_rest_is_equilibrium() {
        let cfg = EnvConfig::peg_hole();
        let s0 = reset(&cfg, 7).unwrap();
        let s1 = step(&s0, &Action::zero(), &cfg);
        for i in 0..3 {
            assert!((s1.pose[i] - s0.pose[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_command_matches_closed_form_tracking() {
        // Independent oracle: closed form of the semi-implicit recurrence
        // v' = v + dt*k*(v_cmd - v), x' = x + dt*v'.
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 3).unwrap();
        s.pose = [0.0, 50.0, 0.0];
        let v_cmd = 2.0;
        let action = Action::clamped([v_cmd, 0.0, 0.0], &cfg);
        let k_actions = 5;
        let mut sim = s.clone();
        for _ in 0..k_actions {
            sim = step(&sim, &action, &cfg);
        }
        let alpha = 1.0 - cfg.dt_control * cfg.gain_kd[0] / cfg.mass;
        let n = (k_actions * cfg.substeps_per_action as usize) as i32;
        // v_j = v_cmd (1 - alpha^j); x_N = dt * sum_{j=1..N} v_j
        let sum_alpha = alpha * (1.0 - alpha.powi(n)) / (1.0 - alpha);
        let x_expect = cfg.dt_control * (n as f64 * v_cmd - v_cmd * sum_alpha);
        let rel = ((sim.pose[0] - x_expect) / x_expect).abs();
        assert!(rel < 1e-6, "x = {}, expected {x_expect}", sim.pose[0]);
    }

    #[test]
    fn free_space_kinetic_energy_dissipates() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 11).unwrap();
        s.twist = [3.0, -2.0, 0.5];
        let ke = |st: &SimState| {
            0.5 * cfg.mass * (st.twist[0].powi(2) + st.twist[1].powi(2))
                + 0.5 * cfg.inertia * st.twist[2].powi(2)
        };
        let mut prev = ke(&s);
        for _ in 0..20 {
            s = step(&s, &Action::zero(), &cfg);
            let cur = ke(&s);
            assert!(cur <= prev + 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn seated_peg_resists_downward_command() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 1).unwrap();
        // Seated at cavity bottom.
        s.pose = [0.0, cfg.hole_bottom() + cfg.peg_half_height, 0.0];
        s.twist = [0.0; 3];
        let y0 = s.pose[1];
        let mut pressed = s;
        for _ in 0..5 {
            pressed = step(&pressed, &Action::clamped([0.0, -3.0, 0.0], &cfg), &cfg);
        }
        assert!((pressed.pose[1] - y0).abs() < cfg.penetration_cap + 0.1);
        let ft = ft_reading(&pressed, &cfg);
        assert!(ft[1] > 0.0, "normal force should push up, got {ft:?}");
    }

    #[test]
    fn ft_zero_in_free_space() {
        let cfg = EnvConfig::peg_hole();
        let s = reset(&cfg, 5).unwrap();
        assert_eq!(ft_reading(&s, &cfg), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn pressing_on_flat_top_obeys_friction_cone() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 2).unwrap();
        // Peg bottom pressed into the right shoulder top, sliding slowly in x.
        s.pose = [10.0, cfg.hole_center[1] + cfg.peg_half_height - 0.2, 0.0];
        s.twist = [0.4, -0.1, 0.0];
        s.contact_points = detect_contacts(s.pose, &cfg);
        assert!(!s.contact_points.is_empty());
        let ft = ft_reading(&s, &cfg);
        assert!(ft[1] > 0.0);
        assert!(ft[0].abs() <= cfg.friction_mu * ft[1] + 1e-9);
    }

    #[test]
    fn symmetric_slot_contact_cancels_lateral_force() {
        // Two mirrored wall contacts at equal depth: lateral components of
        // the synthesized forces must cancel exactly.
        let cfg = EnvConfig::slot();
        let hw = cfg.hole_half_width();
        let y = cfg.hole_center[1] - 2.0;
        let mut s = reset(&cfg, 9).unwrap();
        s.pose = [cfg.hole_center[0], y + cfg.peg_half_height, 0.0];
        s.twist = [0.0, -0.5, 0.0];
        s.contact_points = vec![
            ContactPoint { position: [cfg.hole_center[0] - hw + 0.05, y], normal: [1.0, 0.0], depth: 0.05 },
            ContactPoint { position: [cfg.hole_center[0] + hw - 0.05, y], normal: [-1.0, 0.0], depth: 0.05 },
        ];
        let ft = ft_reading(&s, &cfg);
        assert!(ft[0].abs() < 1e-6, "Fx = {}", ft[0]);
    }

    #[test]
    fn goal_predicate_boundaries() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 0).unwrap();
        // Canonical goal pose: tip at cavity bottom, centered, upright.
        s.pose = [0.0, cfg.hole_bottom() + cfg.peg_half_height, 0.0];
        assert!(is_goal(&s, &cfg));
        assert!(!is_start_region(&s, &cfg));
        // Start pose is not the goal.
        let start = reset(&cfg, 0).unwrap();
        assert!(!is_goal(&start, &cfg));
        // Lateral offset of exactly one clearance fails.
        s.pose[0] = cfg.clearance;
        assert!(!is_goal(&s, &cfg));
    }

    #[test]
    fn start_region_boundary_is_closed() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 0).unwrap();
        s.pose[1] = cfg.start_height_threshold;
        assert!(is_start_region(&s, &cfg));
        s.pose[1] = cfg.start_height_threshold - 1e-9;
        assert!(!is_start_region(&s, &cfg));
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = EnvConfig::peg_hole();
        let s = reset(&cfg, 21).unwrap();
        let a = Action::clamped([1.0, -2.0, 0.3], &cfg);
        assert_eq!(step(&s, &a, &cfg), step(&s, &a, &cfg));
    }

    #[test]
    fn ft_history_window_semantics() {
        let cfg = EnvConfig::peg_hole();
        let mut s = reset(&cfg, 4).unwrap();
        let first = observe(&s, None, &cfg);
        assert_eq!(first.ft_history.len(), cfg.ft_history_len);
        for row in &first.ft_history[..cfg.ft_history_len - 1] {
            assert_eq!(*row, [0.0; 3]);
        }
        assert_eq!(*first.ft_history.last().unwrap(), ft_reading(&s, &cfg));
        // 8 consecutive observations fill the window in order.
        let mut obs = first;
        let mut readings = Vec::new();
        for _ in 0..cfg.ft_history_len {
            s = step(&s, &Action::clamped([0.0, -1.0, 0.0], &cfg), &cfg);
            readings.push(ft_reading(&s, &cfg));
            obs = observe(&s, Some(&obs), &cfg);
        }
        assert_eq!(obs.ft_history, readings);
    }
}
