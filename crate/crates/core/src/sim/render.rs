//! Deterministic software rasterizer for the two camera views.
//!
//! Flat-shaded point sampling at pixel centers: each pixel maps to one
//! world point, classified as peg, fixture, or background. Identical
//! states therefore produce bitwise-identical images.

use super::{point_in_fixture, EnvConfig, SimState};

fn quantize(c: [f64; 3], out: &mut Vec<u8>) {
    for v in c {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
}

fn point_in_peg(p: [f64; 2], state: &SimState, cfg: &EnvConfig) -> bool {
    let dx = p[0] - state.pose[0];
    let dy = p[1] - state.pose[1];
    let (s, c) = (-state.pose[2]).sin_cos();
    let bx = c * dx - s * dy;
    let by = s * dx + c * dy;
    bx.abs() <= cfg.peg_half_width && by.abs() <= cfg.peg_half_height
}

fn scene_color(p: [f64; 2], state: &SimState, cfg: &EnvConfig) -> [f64; 3] {
    if point_in_peg(p, state, cfg) {
        state.object_colors.peg
    } else if point_in_fixture(p, cfg) {
        state.object_colors.fixture
    } else {
        state.object_colors.background
    }
}

/// Fixed camera: the whole workspace, y up (row 0 is the workspace top).
pub fn render_fixed(state: &SimState, cfg: &EnvConfig) -> Vec<u8> {
    let n = cfg.image_size;
    let b = &cfg.workspace_bounds;
    let sx = (b.x_max - b.x_min) / n as f64;
    let sy = (b.y_max - b.y_min) / n as f64;
    let mut out = Vec::with_capacity(n * n * 3);
    for row in 0..n {
        for col in 0..n {
            let p = [
                b.x_min + (col as f64 + 0.5) * sx,
                b.y_max - (row as f64 + 0.5) * sy,
            ];
            quantize(scene_color(p, state, cfg), &mut out);
        }
    }
    out
}

/// Wrist camera: a zoom window centered on the end-effector and rotated
/// with it.
pub fn render_wrist(state: &SimState, cfg: &EnvConfig) -> Vec<u8> {
    let n = cfg.image_size;
    let scale = cfg.wrist_view_extent / n as f64;
    let (s, c) = state.pose[2].sin_cos();
    let mut out = Vec::with_capacity(n * n * 3);
    for row in 0..n {
        for col in 0..n {
            let ox = (col as f64 + 0.5 - n as f64 / 2.0) * scale;
            let oy = (n as f64 / 2.0 - row as f64 - 0.5) * scale;
            let p = [
                state.pose[0] + c * ox - s * oy,
                state.pose[1] + s * ox + c * oy,
            ];
            quantize(scene_color(p, state, cfg), &mut out);
        }
    }
    out
}
