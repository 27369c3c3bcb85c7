//! Temporal triplet loss, reconstruction loss, and the combined objective.

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::nn::{Binding, Tape, Var};

use super::{Decoder, Encoder, ObsTensors};

/// Hyperparameters of the embedding objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    /// Temporal-closeness threshold (in tree steps) separating the two
    /// loss branches.
    pub epsilon: i64,
    /// Margin slope for temporally distant pairs.
    pub beta1: f64,
    /// Gap ceiling for temporally close pairs.
    pub beta2: f64,
    /// Weight of the reconstruction term in the combined objective.
    pub alpha: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig { epsilon: 4, beta1: 0.04, beta2: 0.04, alpha: 0.2 }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epsilon < 0 || self.beta1 < 0.0 || self.beta2 < 0.0 || self.alpha < 0.0 {
            return Err(NnError::DegenerateInput(
                "triplet hyperparameters must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Triplet loss for one ordered pair of embeddings against the goal
/// embedding. `t1 <= t2` (temporal positions, goal at the far end) is
/// required; the caller orders the pair.
///
/// With `g = dist(h1, hG) - dist(h2, hG)` and `dt = t2 - t1`:
/// distant pairs (`dt > epsilon`) pay `max(0, beta1 * dt - g)`; close
/// pairs pay `max(0, -g) + max(0, g - beta2)`.
pub fn triplet_loss(
    tape: &mut Tape,
    h1: Var,
    h2: Var,
    h_goal: Var,
    t1: i64,
    t2: i64,
    cfg: &TripletConfig,
) -> Result<Var, NnError> {
    if t1 > t2 {
        return Err(NnError::TemporalOrder { t1, t2 });
    }
    let d1 = tape.cosine_distance(h1, h_goal);
    let d2 = tape.cosine_distance(h2, h_goal);
    let g = tape.sub(d1, d2);
    let dt = t2 - t1;
    if dt > cfg.epsilon {
        let neg_g = tape.scale(g, -1.0);
        let inner = tape.add_scalar(neg_g, cfg.beta1 * dt as f64);
        Ok(tape.relu(inner))
    } else {
        let neg_g = tape.scale(g, -1.0);
        let a = tape.relu(neg_g);
        let over = tape.add_scalar(g, -cfg.beta2);
        let b = tape.relu(over);
        Ok(tape.add(a, b))
    }
}

/// Reconstruction loss for one observation: mean binary cross-entropy
/// over both images' pixels plus mean squared error over the F/T window.
pub fn reconstruction_loss(
    tape: &mut Tape,
    recon: (Var, Var, Var),
    target: &ObsTensors,
) -> Var {
    let bce_f = tape.bce_mean(recon.0, &target.fixed_chw);
    let bce_w = tape.bce_mean(recon.1, &target.wrist_chw);
    let bce_sum = tape.add(bce_f, bce_w);
    let bce = tape.scale(bce_sum, 0.5);
    let mse = tape.mse_mean(recon.2, &target.ft_ct);
    tape.add(bce, mse)
}

/// One training pair: indices into the batch's distinct-observation list
/// plus the temporal positions of the two observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRef {
    pub a: usize,
    pub b: usize,
    pub t_a: i64,
    pub t_b: i64,
}

/// Scalar components of a combined-objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    pub triplet: f64,
    pub reconstruction: f64,
}

/// Builds the combined minibatch objective
/// `mean(triplet over pairs) + alpha * mean(reconstruction over distinct
/// observations)` on `tape`. Each distinct observation is encoded once
/// and decoded once.
pub fn total_loss(
    tape: &mut Tape,
    encoder: &Encoder,
    decoder: &Decoder,
    binding: &Binding,
    observations: &[ObsTensors],
    goal: &ObsTensors,
    pairs: &[PairRef],
    cfg: &TripletConfig,
) -> Result<(Var, LossParts), NnError> {
    cfg.validate()?;
    if observations.is_empty() || pairs.is_empty() {
        return Err(NnError::DegenerateInput("empty loss batch".into()));
    }
    let h_goal = encoder.forward(tape, binding, goal);
    let latents: Vec<Var> = observations
        .iter()
        .map(|o| encoder.forward(tape, binding, o))
        .collect();

    let mut trip_terms = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.a >= latents.len() || p.b >= latents.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("pair indices < {}", latents.len()),
                got: format!("({}, {})", p.a, p.b),
            });
        }
        // Order so the first element is temporally earlier.
        let (ha, hb, ta, tb) = if p.t_a <= p.t_b {
            (latents[p.a], latents[p.b], p.t_a, p.t_b)
        } else {
            (latents[p.b], latents[p.a], p.t_b, p.t_a)
        };
        trip_terms.push(triplet_loss(tape, ha, hb, h_goal, ta, tb, cfg)?);
    }
    let trip = tape.mean_stack(&trip_terms);

    let mut rec_terms = Vec::with_capacity(observations.len());
    for (h, o) in latents.iter().zip(observations) {
        let recon = decoder.forward(tape, binding, *h);
        rec_terms.push(reconstruction_loss(tape, recon, o));
    }
    let rec = tape.mean_stack(&rec_terms);

    let rec_scaled = tape.scale(rec, cfg.alpha);
    let total = tape.add(trip, rec_scaled);
    let parts = LossParts {
        total: tape.scalar_value(total),
        triplet: tape.scalar_value(trip),
        reconstruction: tape.scalar_value(rec),
    };
    Ok((total, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cosine_distance_value, ParamSet, Tensor};
    use crate::model::NetArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec_var(tape: &mut Tape, v: &[f64]) -> Var {
        tape.leaf(Tensor::new(vec![v.len()], v.to_vec()))
    }

    fn eval_triplet(h1: &[f64], h2: &[f64], hg: &[f64], t1: i64, t2: i64) -> f64 {
        let cfg = TripletConfig::default();
        let mut tape = Tape::new();
        let a = vec_var(&mut tape, h1);
        let b = vec_var(&mut tape, h2);
        let g = vec_var(&mut tape, hg);
        let l = triplet_loss(&mut tape, a, b, g, t1, t2, &cfg).unwrap();
        tape.scalar_value(l)
    }

    #[test]
    fn triplet_rejects_reversed_temporal_order() {
        let cfg = TripletConfig::default();
        let mut tape = Tape::new();
        let a = vec_var(&mut tape, &[1.0, 0.0]);
        let b = vec_var(&mut tape, &[0.0, 1.0]);
        let g = vec_var(&mut tape, &[1.0, 1.0]);
        assert!(matches!(
            triplet_loss(&mut tape, a, b, g, 5, 2, &cfg),
            Err(NnError::TemporalOrder { t1: 5, t2: 2 })
        ));
    }

    #[test]
    fn distant_branch_matches_hand_formula() {
        let h1 = [1.0, 0.2, -0.3];
        let h2 = [0.4, 0.9, 0.1];
        let hg = [0.2, 0.2, 1.0];
        let (t1, t2) = (0, 10);
        let g = cosine_distance_value(&h1, &hg) - cosine_distance_value(&h2, &hg);
        let expect = (0.04_f64 * 10.0 - g).max(0.0);
        assert!((eval_triplet(&h1, &h2, &hg, t1, t2) - expect).abs() < 1e-12);
    }

    #[test]
    fn close_branch_matches_hand_formula() {
        let h1 = [1.0, 0.2, -0.3];
        let h2 = [0.4, 0.9, 0.1];
        let hg = [0.2, 0.2, 1.0];
        let g = cosine_distance_value(&h1, &hg) - cosine_distance_value(&h2, &hg);
        let expect = (-g).max(0.0) + (g - 0.04).max(0.0);
        assert!((eval_triplet(&h1, &h2, &hg, 1, 3) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_close_pair_has_zero_loss() {
        let h = [0.3, 0.7, 0.1];
        let hg = [1.0, 0.0, 0.0];
        assert_eq!(eval_triplet(&h, &h, &hg, 2, 2), 0.0);
    }

    #[test]
    fn reconstruction_bce_at_half_probability_is_ln2() {
        // Constant predictions p = 0.5 against a 0.5 target give BCE ln 2
        // regardless of pixel count; MSE on a matched F/T window is 0.
        let target = ObsTensors {
            fixed_chw: vec![0.5; 12],
            wrist_chw: vec![0.5; 12],
            ft_ct: vec![0.25; 6],
        };
        let mut tape = Tape::new();
        let f = vec_var(&mut tape, &target.fixed_chw);
        let w = vec_var(&mut tape, &target.wrist_chw);
        let ft = vec_var(&mut tape, &target.ft_ct);
        let l = reconstruction_loss(&mut tape, (f, w, ft), &target);
        assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn total_loss_matches_scalar_recomputation() {
        let arch = NetArch::for_observation(8, 8, 16);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let enc = Encoder::new(arch.clone(), &mut params, "enc", &mut rng);
        let dec = Decoder::new(arch.clone(), &mut params, "dec", &mut rng);
        let cfg = EnvCfg8();
        let obs: Vec<_> = (0..3)
            .map(|i| {
                let s = crate::sim::reset(&cfg, i).unwrap();
                let o = crate::sim::observe(&s, None, &cfg);
                ObsTensors::from_observation(&o, &arch).unwrap()
            })
            .collect();
        let goal = obs[2].clone();
        let pairs = vec![
            PairRef { a: 0, b: 1, t_a: 0, t_b: 10 },
            PairRef { a: 1, b: 2, t_a: 9, t_b: 10 },
        ];
        let tcfg = TripletConfig::default();
        let mut tape = Tape::new();
        let binding = crate::nn::Binding::bind_all(&params, &mut tape);
        let (_, parts) =
            total_loss(&mut tape, &enc, &dec, &binding, &obs, &goal, &pairs, &tcfg).unwrap();

        // Independent scalar recomputation through the inference paths.
        let raw: Vec<_> = (0..3)
            .map(|i| {
                let s = crate::sim::reset(&cfg, i).unwrap();
                crate::sim::observe(&s, None, &cfg)
            })
            .collect();
        let hs: Vec<_> = raw.iter().map(|o| enc.encode(&params, o).unwrap()).collect();
        let hg = &hs[2];
        let d = |h: &Vec<f64>| cosine_distance_value(h, hg);
        let g01 = d(&hs[0]) - d(&hs[1]);
        let t0 = (0.04_f64 * 10.0 - g01).max(0.0);
        let g12 = d(&hs[1]) - d(&hs[2]);
        let t1 = (-g12).max(0.0) + (g12 - 0.04).max(0.0);
        let trip = (t0 + t1) / 2.0;
        assert!((parts.triplet - trip).abs() < 1e-9, "{} vs {trip}", parts.triplet);

        let mut rec = 0.0;
        for (h, o) in hs.iter().zip(&obs) {
            let (rf, rw, rft) = dec.decode(&params, h).unwrap();
            let bce = |p: &[f64], t: &[f64]| {
                let s: f64 = p
                    .iter()
                    .zip(t)
                    .map(|(p, t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
                    .sum();
                s / p.len() as f64
            };
            let mse: f64 = rft
                .iter()
                .zip(&o.ft_ct)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / rft.len() as f64;
            rec += 0.5 * (bce(&rf, &o.fixed_chw) + bce(&rw, &o.wrist_chw)) + mse;
        }
        rec /= 3.0;
        assert!((parts.reconstruction - rec).abs() < 1e-9);
        assert!((parts.total - (trip + 0.2 * rec)).abs() < 1e-9);
    }

    #[allow(non_snake_case)]
    fn EnvCfg8() -> crate::sim::EnvConfig {
        let mut cfg = crate::sim::EnvConfig::peg_hole();
        cfg.image_size = 8;
        cfg
    }

    #[test]
    fn total_loss_gradients_match_finite_differences() {
        let arch = NetArch::for_observation(8, 8, 8);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = Encoder::new(arch.clone(), &mut params, "enc", &mut rng);
        let dec = Decoder::new(arch.clone(), &mut params, "dec", &mut rng);
        let cfg = EnvCfg8();
        let obs: Vec<_> = (0..2)
            .map(|i| {
                let s = crate::sim::reset(&cfg, i).unwrap();
                let mut o = crate::sim::observe(&s, None, &cfg);
                // Contact-free resets give an all-zero F/T window, which
                // parks the first conv exactly on the ReLU kink where
                // finite differences are ill-defined; use nonzero forces.
                for (t, row) in o.ft_history.iter_mut().enumerate() {
                    *row = [0.3 + 0.1 * t as f64, -0.2 + 0.05 * i as f64, 0.02 * t as f64];
                }
                ObsTensors::from_observation(&o, &arch).unwrap()
            })
            .collect();
        let goal = obs[1].clone();
        let pairs = vec![PairRef { a: 0, b: 1, t_a: 0, t_b: 7 }];
        let tcfg = TripletConfig::default();

        let eval = |params: &ParamSet| -> f64 {
            let mut tape = Tape::new();
            let binding = crate::nn::Binding::bind_all(params, &mut tape);
            let (_, parts) =
                total_loss(&mut tape, &enc, &dec, &binding, &obs, &goal, &pairs, &tcfg).unwrap();
            parts.total
        };

        let mut tape = Tape::new();
        let binding = crate::nn::Binding::bind_all(&params, &mut tape);
        let (root, _) =
            total_loss(&mut tape, &enc, &dec, &binding, &obs, &goal, &pairs, &tcfg).unwrap();
        let grads = tape.backward(root).unwrap();

        // Spot-check a few coordinates in every named parameter group.
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        let mut checked = 0;
        for id in ids {
            let n = params.get(id).tensor.data.len();
            let g = grads.wrt(binding.var(id)).expect("missing gradient").to_vec();
            for k in [0, n / 2] {
                let eps = 1e-5;
                let orig = params.get(id).tensor.data[k];
                let mut p = params.clone();
                p.get_mut(id).tensor.data[k] = orig + eps;
                let up = eval(&p);
                p.get_mut(id).tensor.data[k] = orig - eps;
                let down = eval(&p);
                let fd = (up - down) / (2.0 * eps);
                let scale = fd.abs().max(g[k].abs()).max(1.0);
                assert!(
                    (fd - g[k]).abs() / scale < 1e-4,
                    "{} [{k}]: fd {fd} vs ad {}",
                    params.get(id).name,
                    g[k]
                );
                checked += 1;
            }
        }
        assert!(checked > 50);
    }
}
