//! Compact actor and critic networks for desk-scale control.
//!
//! Both consume the raw observation: each camera image goes through one
//! aggressively strided convolution, the optional F/T window through a
//! small linear layer, and a fused trunk produces the feature vector.
//! The actor head emits a squashed-Gaussian mean and log-std; the critic
//! head appends the action and emits a scalar value.

use rand_chacha::ChaCha8Rng;

use crate::model::{ft_rows_to_ct, hwc_bytes_to_chw};
use crate::nn::{Binding, ParamId, ParamSet, Tape, Tensor, Var};
use crate::sim::Observation;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Shape parameters shared by the actor and critics.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArch {
    pub image_size: usize,
    pub ft_history_len: usize,
    /// Include the F/T branch (learned-reward condition); baselines see
    /// images only.
    pub uses_ft: bool,
    pub conv_channels: usize,
    pub feature_dim: usize,
    pub head_hidden: usize,
    pub action_dim: usize,
}

impl PolicyArch {
    pub fn new(image_size: usize, ft_history_len: usize, uses_ft: bool) -> Self {
        assert!(image_size % 4 == 0, "image_size must be divisible by 4");
        PolicyArch {
            image_size,
            ft_history_len,
            uses_ft,
            conv_channels: 8,
            feature_dim: 64,
            head_hidden: 64,
            action_dim: 3,
        }
    }

    /// One conv with kernel = stride = image_size / 4 maps any image to a
    /// 4x4 feature map.
    fn conv_k(&self) -> usize {
        self.image_size / 4
    }

    fn conv_flat(&self) -> usize {
        self.conv_channels * 16
    }

    fn ft_dim(&self) -> usize {
        if self.uses_ft {
            16
        } else {
            0
        }
    }

    fn trunk_in(&self) -> usize {
        2 * self.conv_flat() + self.ft_dim()
    }
}

/// Observation flattened into the network input layout.
#[derive(Debug, Clone)]
pub struct PolicyInput {
    pub fixed_chw: Vec<f64>,
    pub wrist_chw: Vec<f64>,
    pub ft_ct: Vec<f64>,
}

impl PolicyInput {
    pub fn from_observation(obs: &Observation, arch: &PolicyArch) -> Self {
        PolicyInput {
            fixed_chw: hwc_bytes_to_chw(&obs.fixed_image, arch.image_size),
            wrist_chw: hwc_bytes_to_chw(&obs.wrist_image, arch.image_size),
            ft_ct: if arch.uses_ft { ft_rows_to_ct(&obs.ft_history) } else { Vec::new() },
        }
    }
}

/// Feature trunk: image convs (+ optional F/T linear) fused by one
/// hidden layer.
pub struct FeatureNet {
    pub arch: PolicyArch,
    conv_fixed: (ParamId, ParamId),
    conv_wrist: (ParamId, ParamId),
    ft_lin: Option<(ParamId, ParamId)>,
    trunk: (ParamId, ParamId),
}

impl FeatureNet {
    pub fn new(
        arch: PolicyArch,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let k = arch.conv_k();
        let c = arch.conv_channels;
        let conv = |name: &str, params: &mut ParamSet, rng: &mut ChaCha8Rng| {
            let w = params.register_fan_in(
                &format!("{prefix}.{name}.w"),
                vec![c, 3, k, k],
                3 * k * k,
                rng,
            );
            let b = params.register_zeros(&format!("{prefix}.{name}.b"), vec![c]);
            (w, b)
        };
        let conv_fixed = conv("conv_fixed", params, rng);
        let conv_wrist = conv("conv_wrist", params, rng);
        let ft_lin = if arch.uses_ft {
            let n_in = 3 * arch.ft_history_len;
            let w = params.register_small(&format!("{prefix}.ft.w"), vec![16, n_in], n_in, rng);
            let b = params.register_zeros(&format!("{prefix}.ft.b"), vec![16]);
            Some((w, b))
        } else {
            None
        };
        let n_in = arch.trunk_in();
        let w = params.register_small(
            &format!("{prefix}.trunk.w"),
            vec![arch.feature_dim, n_in],
            n_in,
            rng,
        );
        let b = params.register_zeros(&format!("{prefix}.trunk.b"), vec![arch.feature_dim]);
        FeatureNet { arch, conv_fixed, conv_wrist, ft_lin, trunk: (w, b) }
    }

    pub fn forward(&self, tape: &mut Tape, binding: &Binding, input: &PolicyInput) -> Var {
        let n = self.arch.image_size;
        let k = self.arch.conv_k();
        let branch = |tape: &mut Tape, data: &[f64], conv: (ParamId, ParamId)| {
            let x = tape.constant(Tensor::new(vec![3, n, n], data.to_vec()));
            let h = tape.conv2d(x, binding.var(conv.0), binding.var(conv.1), k, 0);
            let h = tape.relu(h);
            let len = tape.value(h).len();
            tape.reshape(h, vec![len])
        };
        let bf = branch(tape, &input.fixed_chw, self.conv_fixed);
        let bw = branch(tape, &input.wrist_chw, self.conv_wrist);
        let fused = if let Some((w, b)) = self.ft_lin {
            let ft = tape.constant(Tensor::new(vec![input.ft_ct.len()], input.ft_ct.clone()));
            let h = tape.linear(ft, binding.var(w), binding.var(b));
            let h = tape.relu(h);
            tape.concat(&[bf, bw, h])
        } else {
            tape.concat(&[bf, bw])
        };
        let t = tape.linear(fused, binding.var(self.trunk.0), binding.var(self.trunk.1));
        tape.relu(t)
    }
}

/// Squashed-Gaussian actor.
pub struct Actor {
    pub features: FeatureNet,
    hidden: (ParamId, ParamId),
    mean: (ParamId, ParamId),
    log_std: (ParamId, ParamId),
}

impl Actor {
    pub fn new(
        arch: PolicyArch,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let f = arch.feature_dim;
        let h = arch.head_hidden;
        let a = arch.action_dim;
        let features = FeatureNet::new(arch, params, &format!("{prefix}.feat"), rng);
        let hw = params.register_small(&format!("{prefix}.hidden.w"), vec![h, f], f, rng);
        let hb = params.register_zeros(&format!("{prefix}.hidden.b"), vec![h]);
        let mw = params.register_small(&format!("{prefix}.mean.w"), vec![a, h], h, rng);
        let mb = params.register_zeros(&format!("{prefix}.mean.b"), vec![a]);
        let sw = params.register_small(&format!("{prefix}.log_std.w"), vec![a, h], h, rng);
        let sb = params.register_zeros(&format!("{prefix}.log_std.b"), vec![a]);
        Actor { features, hidden: (hw, hb), mean: (mw, mb), log_std: (sw, sb) }
    }

    /// Returns `(mean, log_std)` with log-std bounded to
    /// `[LOG_STD_MIN, LOG_STD_MAX]` by a tanh rescaling.
    pub fn forward(&self, tape: &mut Tape, binding: &Binding, input: &PolicyInput) -> (Var, Var) {
        let feat = self.features.forward(tape, binding, input);
        let h = tape.linear(feat, binding.var(self.hidden.0), binding.var(self.hidden.1));
        let h = tape.relu(h);
        let mean = tape.linear(h, binding.var(self.mean.0), binding.var(self.mean.1));
        let raw = tape.linear(h, binding.var(self.log_std.0), binding.var(self.log_std.1));
        let t = tape.tanh(raw);
        let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
        let scaled = tape.scale(t, half);
        let log_std = tape.add_scalar(scaled, LOG_STD_MIN + half);
        (mean, log_std)
    }
}

/// Q-value network; the action joins the feature vector before the head.
pub struct Critic {
    pub features: FeatureNet,
    hidden: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

impl Critic {
    pub fn new(
        arch: PolicyArch,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let f = arch.feature_dim;
        let h = arch.head_hidden;
        let a = arch.action_dim;
        let features = FeatureNet::new(arch, params, &format!("{prefix}.feat"), rng);
        let hw = params.register_small(&format!("{prefix}.hidden.w"), vec![h, f + a], f + a, rng);
        let hb = params.register_zeros(&format!("{prefix}.hidden.b"), vec![h]);
        let ow = params.register_small(&format!("{prefix}.out.w"), vec![1, h], h, rng);
        let ob = params.register_zeros(&format!("{prefix}.out.b"), vec![1]);
        Critic { features, hidden: (hw, hb), out: (ow, ob) }
    }

    /// Q(s, a): `action` must be a length-3 Var in normalized [-1, 1]
    /// units.
    pub fn forward(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        input: &PolicyInput,
        action: Var,
    ) -> Var {
        let feat = self.features.forward(tape, binding, input);
        let joined = tape.concat(&[feat, action]);
        let h = tape.linear(joined, binding.var(self.hidden.0), binding.var(self.hidden.1));
        let h = tape.relu(h);
        tape.linear(h, binding.var(self.out.0), binding.var(self.out.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use crate::sim::{observe, reset, EnvConfig};

    fn input(uses_ft: bool) -> (PolicyArch, PolicyInput) {
        let mut cfg = EnvConfig::peg_hole();
        cfg.image_size = 8;
        let arch = PolicyArch::new(8, cfg.ft_history_len, uses_ft);
        let s = reset(&cfg, 4).unwrap();
        let obs = observe(&s, None, &cfg);
        let inp = PolicyInput::from_observation(&obs, &arch);
        (arch, inp)
    }

    #[test]
    fn actor_outputs_have_action_dim_and_bounded_log_std() {
        for uses_ft in [false, true] {
            let (arch, inp) = input(uses_ft);
            let mut params = ParamSet::new();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let actor = Actor::new(arch, &mut params, "pi", &mut rng);
            let mut tape = Tape::new();
            let binding = Binding::bind_frozen(&params, &mut tape);
            let (mean, log_std) = actor.forward(&mut tape, &binding, &inp);
            assert_eq!(tape.value(mean).len(), 3);
            let ls = tape.value(log_std).data.clone();
            assert!(ls.iter().all(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v)));
        }
    }

    #[test]
    fn critic_is_sensitive_to_action() {
        let (arch, inp) = input(true);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let critic = Critic::new(arch, &mut params, "q", &mut rng);
        let mut tape = Tape::new();
        let binding = Binding::bind_frozen(&params, &mut tape);
        let a1 = tape.constant(Tensor::new(vec![3], vec![0.1, -0.5, 0.9]));
        let a2 = tape.constant(Tensor::new(vec![3], vec![-0.8, 0.2, 0.0]));
        let q1 = critic.forward(&mut tape, &binding, &inp, a1);
        let q2 = critic.forward(&mut tape, &binding, &inp, a2);
        assert_ne!(tape.scalar_value(q1), tape.scalar_value(q2));
    }

    #[test]
    fn image_only_arch_has_no_ft_parameters() {
        let (arch, _) = input(false);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let _ = Actor::new(arch, &mut params, "pi", &mut rng);
        assert!(params.iter().all(|(_, p)| !p.name.contains(".ft.")));
    }
}
