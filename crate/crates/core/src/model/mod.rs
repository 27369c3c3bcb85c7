//! Multimodal encoder/decoder for the task-progress embedding.
//!
//! Three branches: each camera image passes a strided convolution stack
//! and a projection to 64 features; the F/T window passes a causal 1-D
//! convolution stack to 32 features. The concatenated 64+64+32 vector is
//! fused by a 2-layer MLP into the latent embedding. The decoder mirrors
//! the encoder with transposed convolutions, ending in a sigmoid for the
//! image heads.

pub mod loss;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::nn::{Binding, ParamId, ParamSet, Tape, Tensor, Var};
use crate::sim::Observation;

/// Architecture descriptor. Conv depth scales with image size so the
/// final feature map is always 2x2: 8 px -> 2 layers, 32 px -> 4,
/// 128 px -> 6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub image_size: usize,
    pub image_channels: Vec<usize>,
    pub branch_dim_image: usize,
    pub ft_channels: Vec<usize>,
    pub ft_kernel: usize,
    pub ft_history_len: usize,
    pub branch_dim_ft: usize,
    pub fusion_hidden: usize,
    pub latent_dim: usize,
}

impl NetArch {
    pub fn for_observation(image_size: usize, ft_history_len: usize, latent_dim: usize) -> Self {
        assert!(image_size.is_power_of_two() && image_size >= 8, "image_size must be 2^k >= 8");
        assert!(
            ft_history_len.is_power_of_two() && ft_history_len >= 2,
            "ft_history_len must be 2^k >= 2"
        );
        let layers = image_size.trailing_zeros() as usize - 1;
        let full = [4usize, 8, 16, 16, 16, 16];
        NetArch {
            image_size,
            image_channels: full[..layers].to_vec(),
            branch_dim_image: 64,
            ft_channels: vec![8, 16, 16, 16],
            ft_kernel: 2,
            ft_history_len,
            branch_dim_ft: 32,
            fusion_hidden: 128,
            latent_dim,
        }
    }

    pub fn desk_scale() -> Self {
        Self::for_observation(32, 8, 128)
    }

    /// Channels of the final encoder feature map (always 2x2 spatial).
    fn last_image_channels(&self) -> usize {
        *self.image_channels.last().unwrap()
    }
}

struct ConvStack {
    layers: Vec<(ParamId, ParamId)>,
    proj: (ParamId, ParamId),
}

/// Encoder parameters registered in one [`ParamSet`].
pub struct Encoder {
    pub arch: NetArch,
    fixed: ConvStack,
    wrist: ConvStack,
    ft: ConvStack,
    fuse1: (ParamId, ParamId),
    fuse2: (ParamId, ParamId),
}

fn image_stack(
    arch: &NetArch,
    params: &mut ParamSet,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> ConvStack {
    let mut layers = Vec::new();
    let mut c_in = 3;
    for (i, c_out) in arch.image_channels.iter().enumerate() {
        let w = params.register_fan_in(
            &format!("{prefix}.conv{i}.w"),
            vec![*c_out, c_in, 3, 3],
            c_in * 9,
            rng,
        );
        let b = params.register_zeros(&format!("{prefix}.conv{i}.b"), vec![*c_out]);
        layers.push((w, b));
        c_in = *c_out;
    }
    let flat = arch.last_image_channels() * 4;
    let w = params.register_small(
        &format!("{prefix}.proj.w"),
        vec![arch.branch_dim_image, flat],
        flat,
        rng,
    );
    let b = params.register_zeros(&format!("{prefix}.proj.b"), vec![arch.branch_dim_image]);
    ConvStack { layers, proj: (w, b) }
}

impl Encoder {
    pub fn new(arch: NetArch, params: &mut ParamSet, prefix: &str, rng: &mut ChaCha8Rng) -> Self {
        let fixed = image_stack(&arch, params, &format!("{prefix}.fixed"), rng);
        let wrist = image_stack(&arch, params, &format!("{prefix}.wrist"), rng);
        let mut ft_layers = Vec::new();
        let mut c_in = 3;
        for (i, c_out) in arch.ft_channels.iter().enumerate() {
            let w = params.register_fan_in(
                &format!("{prefix}.ft.conv{i}.w"),
                vec![*c_out, c_in, arch.ft_kernel],
                c_in * arch.ft_kernel,
                rng,
            );
            let b = params.register_zeros(&format!("{prefix}.ft.conv{i}.b"), vec![*c_out]);
            ft_layers.push((w, b));
            c_in = *c_out;
        }
        let ft_last = *arch.ft_channels.last().unwrap();
        let w = params.register_small(
            &format!("{prefix}.ft.proj.w"),
            vec![arch.branch_dim_ft, ft_last],
            ft_last,
            rng,
        );
        let b = params.register_zeros(&format!("{prefix}.ft.proj.b"), vec![arch.branch_dim_ft]);
        let ft = ConvStack { layers: ft_layers, proj: (w, b) };
        let fused_in = 2 * arch.branch_dim_image + arch.branch_dim_ft;
        let f1w = params.register_small(
            &format!("{prefix}.fuse1.w"),
            vec![arch.fusion_hidden, fused_in],
            fused_in,
            rng,
        );
        let f1b = params.register_zeros(&format!("{prefix}.fuse1.b"), vec![arch.fusion_hidden]);
        let f2w = params.register_small(
            &format!("{prefix}.fuse2.w"),
            vec![arch.latent_dim, arch.fusion_hidden],
            arch.fusion_hidden,
            rng,
        );
        let f2b = params.register_zeros(&format!("{prefix}.fuse2.b"), vec![arch.latent_dim]);
        Encoder { arch, fixed, wrist, ft, fuse1: (f1w, f1b), fuse2: (f2w, f2b) }
    }

    fn image_branch(&self, tape: &mut Tape, binding: &Binding, stack: &ConvStack, x: Var) -> Var {
        let mut h = x;
        for (w, b) in &stack.layers {
            h = tape.conv2d(h, binding.var(*w), binding.var(*b), 2, 1);
            h = tape.relu(h);
        }
        let n = tape.value(h).len();
        let flat = tape.reshape(h, vec![n]);
        let p = tape.linear(flat, binding.var(stack.proj.0), binding.var(stack.proj.1));
        tape.relu(p)
    }

    fn ft_branch(&self, tape: &mut Tape, binding: &Binding, x: Var) -> Var {
        let mut h = x;
        for (w, b) in &self.ft.layers {
            h = tape.causal_conv1d(h, binding.var(*w), binding.var(*b));
            h = tape.relu(h);
        }
        // Final-timestep feature vector of the causal stack.
        let t_len = self.arch.ft_history_len;
        let c = *self.arch.ft_channels.last().unwrap();
        let idx: Vec<usize> = (0..c).map(|ch| ch * t_len + t_len - 1).collect();
        let last = tape.gather(h, &idx);
        let p = tape.linear(last, binding.var(self.ft.proj.0), binding.var(self.ft.proj.1));
        tape.relu(p)
    }

    /// Graph-mode forward over already-validated observation tensors.
    pub fn forward(&self, tape: &mut Tape, binding: &Binding, obs: &ObsTensors) -> Var {
        let n = self.arch.image_size;
        let fx = tape.constant(Tensor::new(vec![3, n, n], obs.fixed_chw.clone()));
        let wx = tape.constant(Tensor::new(vec![3, n, n], obs.wrist_chw.clone()));
        let ft = tape.constant(Tensor::new(
            vec![3, self.arch.ft_history_len],
            obs.ft_ct.clone(),
        ));
        let bf = self.image_branch(tape, binding, &self.fixed, fx);
        let bw = self.image_branch(tape, binding, &self.wrist, wx);
        let bt = self.ft_branch(tape, binding, ft);
        let cat = tape.concat(&[bf, bw, bt]);
        let h1 = tape.linear(cat, binding.var(self.fuse1.0), binding.var(self.fuse1.1));
        let h1 = tape.relu(h1);
        tape.linear(h1, binding.var(self.fuse2.0), binding.var(self.fuse2.1))
    }

    /// Inference-mode encoding of an observation into the latent vector.
    pub fn encode(&self, params: &ParamSet, obs: &Observation) -> Result<Vec<f64>, NnError> {
        let tensors = ObsTensors::from_observation(obs, &self.arch)?;
        let mut tape = Tape::new();
        let binding = Binding::bind_frozen(params, &mut tape);
        let h = self.forward(&mut tape, &binding, &tensors);
        Ok(tape.value(h).data.clone())
    }
}

/// Decoder parameters: one transposed-convolution head per image, plus a
/// 1-D head for the F/T window.
pub struct Decoder {
    pub arch: NetArch,
    fixed: DecoderImageHead,
    wrist: DecoderImageHead,
    ft_stem: (ParamId, ParamId),
    ft_layers: Vec<(ParamId, ParamId)>,
}

struct DecoderImageHead {
    stem: (ParamId, ParamId),
    layers: Vec<(ParamId, ParamId)>,
}

fn image_head(
    arch: &NetArch,
    params: &mut ParamSet,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> DecoderImageHead {
    let c0 = *arch.image_channels.last().unwrap();
    let stem_w = params.register_small(
        &format!("{prefix}.stem.w"),
        vec![c0 * 4, arch.latent_dim],
        arch.latent_dim,
        rng,
    );
    let stem_b = params.register_zeros(&format!("{prefix}.stem.b"), vec![c0 * 4]);
    let mut channels: Vec<usize> = arch.image_channels.iter().rev().skip(1).copied().collect();
    channels.push(3);
    let mut layers = Vec::new();
    let mut c_in = c0;
    for (i, c_out) in channels.iter().enumerate() {
        let w = params.register_fan_in(
            &format!("{prefix}.deconv{i}.w"),
            vec![c_in, *c_out, 4, 4],
            c_in * 16,
            rng,
        );
        let b = params.register_zeros(&format!("{prefix}.deconv{i}.b"), vec![*c_out]);
        layers.push((w, b));
        c_in = *c_out;
    }
    DecoderImageHead { stem: (stem_w, stem_b), layers }
}

impl Decoder {
    pub fn new(arch: NetArch, params: &mut ParamSet, prefix: &str, rng: &mut ChaCha8Rng) -> Self {
        let fixed = image_head(&arch, params, &format!("{prefix}.fixed"), rng);
        let wrist = image_head(&arch, params, &format!("{prefix}.wrist"), rng);
        let c_ft = *arch.ft_channels.last().unwrap();
        let stem_w = params.register_small(
            &format!("{prefix}.ft.stem.w"),
            vec![c_ft * 2, arch.latent_dim],
            arch.latent_dim,
            rng,
        );
        let stem_b = params.register_zeros(&format!("{prefix}.ft.stem.b"), vec![c_ft * 2]);
        // Upsample 2 -> ft_history_len by doubling, then a 1x1 conv to 3 axes.
        let doublings = (arch.ft_history_len / 2).trailing_zeros() as usize;
        let mut layers = Vec::new();
        let mut c_in = c_ft;
        for i in 0..doublings {
            let c_out = 8;
            let w = params.register_fan_in(
                &format!("{prefix}.ft.deconv{i}.w"),
                vec![c_in, c_out, 4],
                c_in * 4,
                rng,
            );
            let b = params.register_zeros(&format!("{prefix}.ft.deconv{i}.b"), vec![c_out]);
            layers.push((w, b));
            c_in = c_out;
        }
        let w = params.register_small(&format!("{prefix}.ft.out.w"), vec![3, c_in, 1], c_in, rng);
        let b = params.register_zeros(&format!("{prefix}.ft.out.b"), vec![3]);
        layers.push((w, b));
        Decoder { arch, fixed, wrist, ft_stem: (stem_w, stem_b), ft_layers: layers }
    }

    fn image_forward(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        head: &DecoderImageHead,
        h: Var,
    ) -> Var {
        let c0 = *self.arch.image_channels.last().unwrap();
        let stem = tape.linear(h, binding.var(head.stem.0), binding.var(head.stem.1));
        let stem = tape.relu(stem);
        let mut x = tape.reshape(stem, vec![c0, 2, 2]);
        let n_layers = head.layers.len();
        for (i, (w, b)) in head.layers.iter().enumerate() {
            x = tape.conv_t2d(x, binding.var(*w), binding.var(*b), 2, 1);
            if i + 1 < n_layers {
                x = tape.relu(x);
            }
        }
        tape.sigmoid(x)
    }

    /// Reconstructs `(fixed [3,S,S], wrist [3,S,S], ft [3,T])` from a latent.
    pub fn forward(&self, tape: &mut Tape, binding: &Binding, h: Var) -> (Var, Var, Var) {
        let fixed = self.image_forward(tape, binding, &self.fixed, h);
        let wrist = self.image_forward(tape, binding, &self.wrist, h);
        let c_ft = *self.arch.ft_channels.last().unwrap();
        let stem = tape.linear(h, binding.var(self.ft_stem.0), binding.var(self.ft_stem.1));
        let stem = tape.relu(stem);
        let mut x = tape.reshape(stem, vec![c_ft, 2]);
        let n_layers = self.ft_layers.len();
        for (i, (w, b)) in self.ft_layers.iter().enumerate() {
            if i + 1 < n_layers {
                x = tape.conv_t1d(x, binding.var(*w), binding.var(*b), 2, 1);
                x = tape.relu(x);
            } else {
                // 1x1 projection to the 3 force/torque axes.
                x = tape.causal_conv1d(x, binding.var(*w), binding.var(*b));
            }
        }
        (fixed, wrist, x)
    }

    /// Inference-mode reconstruction from a latent vector.
    pub fn decode(
        &self,
        params: &ParamSet,
        h: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NnError> {
        if h.len() != self.arch.latent_dim {
            return Err(NnError::ShapeMismatch {
                expected: format!("latent of length {}", self.arch.latent_dim),
                got: format!("length {}", h.len()),
            });
        }
        let mut tape = Tape::new();
        let binding = Binding::bind_frozen(params, &mut tape);
        let hv = tape.constant(Tensor::new(vec![h.len()], h.to_vec()));
        let (f, w, ft) = self.forward(&mut tape, &binding, hv);
        Ok((
            tape.value(f).data.clone(),
            tape.value(w).data.clone(),
            tape.value(ft).data.clone(),
        ))
    }
}

/// Observation converted to the channel-major tensors the network consumes.
#[derive(Debug, Clone)]
pub struct ObsTensors {
    pub fixed_chw: Vec<f64>,
    pub wrist_chw: Vec<f64>,
    pub ft_ct: Vec<f64>,
}

impl ObsTensors {
    pub fn from_observation(obs: &Observation, arch: &NetArch) -> Result<Self, NnError> {
        let n = arch.image_size;
        if obs.image_size != n || obs.fixed_image.len() != n * n * 3 || obs.wrist_image.len() != n * n * 3
        {
            return Err(NnError::ShapeMismatch {
                expected: format!("{n}x{n}x3 images"),
                got: format!(
                    "image_size {} ({} / {} bytes)",
                    obs.image_size,
                    obs.fixed_image.len(),
                    obs.wrist_image.len()
                ),
            });
        }
        if obs.ft_history.len() != arch.ft_history_len {
            return Err(NnError::ShapeMismatch {
                expected: format!("ft history of {}", arch.ft_history_len),
                got: format!("{}", obs.ft_history.len()),
            });
        }
        Ok(ObsTensors {
            fixed_chw: hwc_bytes_to_chw(&obs.fixed_image, n),
            wrist_chw: hwc_bytes_to_chw(&obs.wrist_image, n),
            ft_ct: ft_rows_to_ct(&obs.ft_history),
        })
    }
}

pub fn hwc_bytes_to_chw(bytes: &[u8], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 3 * n * n];
    for row in 0..n {
        for col in 0..n {
            for ch in 0..3 {
                out[ch * n * n + row * n + col] = bytes[(row * n + col) * 3 + ch] as f64 / 255.0;
            }
        }
    }
    out
}

/// Mirrors observation tensors about the vertical axis: pixel columns
/// reverse in both views, and the wrist-frame x-force and torque
/// channels change sign. When the scene is left-right symmetric this is
/// exactly the observation of the mirrored state.
pub fn mirror_obs_tensors(t: &mut ObsTensors, image_size: usize, ft_len: usize) {
    let n = image_size;
    for img in [&mut t.fixed_chw, &mut t.wrist_chw] {
        for ch in 0..3 {
            for row in 0..n {
                let base = ch * n * n + row * n;
                img[base..base + n].reverse();
            }
        }
    }
    // ft_ct layout is channel-major over (fx, fy, tau).
    for v in &mut t.ft_ct[..ft_len] {
        *v = -*v;
    }
    for v in &mut t.ft_ct[2 * ft_len..3 * ft_len] {
        *v = -*v;
    }
}

pub fn ft_rows_to_ct(rows: &[[f64; 3]]) -> Vec<f64> {
    let t = rows.len();
    let mut out = vec![0.0; 3 * t];
    for (i, r) in rows.iter().enumerate() {
        for ch in 0..3 {
            out[ch * t + i] = r[ch];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use crate::sim::{observe, reset, EnvConfig};

    fn small_setup() -> (EnvConfig, NetArch, ParamSet, Encoder, Decoder) {
        let mut cfg = EnvConfig::peg_hole();
        cfg.image_size = 8;
        let arch = NetArch::for_observation(8, 8, 16);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::new(arch.clone(), &mut params, "enc", &mut rng);
        let dec = Decoder::new(arch.clone(), &mut params, "dec", &mut rng);
        (cfg, arch, params, enc, dec)
    }

    #[test]
    fn encode_has_latent_dim_and_is_deterministic() {
        let (cfg, arch, params, enc, _) = small_setup();
        let s = reset(&cfg, 5).unwrap();
        let obs = observe(&s, None, &cfg);
        let h1 = enc.encode(&params, &obs).unwrap();
        let h2 = enc.encode(&params, &obs).unwrap();
        assert_eq!(h1.len(), arch.latent_dim);
        assert_eq!(h1, h2);
    }

    #[test]
    fn encode_is_sensitive_to_ft_input() {
        let (cfg, _, params, enc, _) = small_setup();
        let s = reset(&cfg, 5).unwrap();
        let obs = observe(&s, None, &cfg);
        let h1 = enc.encode(&params, &obs).unwrap();
        let mut obs2 = obs.clone();
        obs2.ft_history[7] = [5.0, -3.0, 1.0];
        let h2 = enc.encode(&params, &obs2).unwrap();
        assert!(h1.iter().zip(&h2).any(|(a, b)| a != b));
    }

    #[test]
    fn encode_rejects_shape_mismatch() {
        let (_, _, params, enc, _) = small_setup();
        let other = EnvConfig::peg_hole(); // 32 px images
        let s = reset(&other, 0).unwrap();
        let obs = observe(&s, None, &other);
        assert!(matches!(enc.encode(&params, &obs), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn decode_shapes_and_open_interval() {
        let (_, arch, params, _, dec) = small_setup();
        let h = vec![0.3; arch.latent_dim];
        let (f, w, ft) = dec.decode(&params, &h).unwrap();
        let n = arch.image_size;
        assert_eq!(f.len(), 3 * n * n);
        assert_eq!(w.len(), 3 * n * n);
        assert_eq!(ft.len(), 3 * arch.ft_history_len);
        assert!(f.iter().chain(&w).all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn zero_latent_with_zero_biases_decodes_to_half_gray() {
        let (_, arch, mut params, _, dec) = small_setup();
        // Zero every decoder bias; weights are irrelevant on a zero latent.
        let ids: Vec<_> = params
            .iter()
            .filter(|(_, p)| p.name.starts_with("dec") && p.name.ends_with(".b"))
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            for v in params.get_mut(id).tensor.data.iter_mut() {
                *v = 0.0;
            }
        }
        let h = vec![0.0; arch.latent_dim];
        let (f, w, _) = dec.decode(&params, &h).unwrap();
        assert!(f.iter().chain(&w).all(|v| (*v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn decode_rejects_bad_latent_length() {
        let (_, _, params, _, dec) = small_setup();
        assert!(matches!(dec.decode(&params, &[0.0; 3]), Err(NnError::ShapeMismatch { .. })));
    }
}
