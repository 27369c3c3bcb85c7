//! Minimal reverse-mode autodiff with the layer set needed by the
//! encoder/decoder, the losses, and the SAC networks.

pub mod adam;
pub mod checkpoint;
pub mod kernels;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use params::{Binding, Param, ParamId, ParamSet};
pub use tape::{cosine_distance_value, Gradients, Tape, Tensor, Var};

use crate::error::NnError;

/// Cosine latent distance between two embeddings, in `[0, 2]`.
///
/// Standalone evaluation path used by reward inference and the formula
/// oracles; rejects exact-zero inputs instead of guarding the norm.
pub fn latent_distance(a: &[f64], b: &[f64]) -> Result<f64, NnError> {
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(NnError::DegenerateInput("zero-norm latent vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_distance_rejects_zero_norm() {
        assert!(matches!(latent_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(NnError::DegenerateInput(_))));
    }

    #[test]
    fn latent_distance_identical_vectors() {
        let v = [0.3, -1.2, 4.0];
        assert!(latent_distance(&v, &v).unwrap().abs() < 1e-12);
    }
}
