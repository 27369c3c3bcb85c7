//! Demonstrates the tape-based reverse-mode autodiff engine on a small
//! network and verifies its gradients against central finite differences.
//!
//! Run with: `cargo run --example autodiff`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rewardlab::nn::{Binding, ParamSet, Tape, Tensor};

/// loss(params) = mse(tanh(W2 relu(W1 x + b1) + b2), target).
///
/// Returns the loss value and, when requested, the full gradient of
/// every parameter tensor.
fn loss_and_grad(params: &ParamSet, want_grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let binding = if want_grads {
        Binding::bind_all(params, &mut tape)
    } else {
        Binding::bind_frozen(params, &mut tape)
    };
    let x = tape.constant(Tensor::new(vec![4], vec![0.3, -0.9, 0.5, 0.1]));
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    let h = tape.linear(x, binding.var(ids[0]), binding.var(ids[1]));
    let h = tape.relu(h);
    let y = tape.linear(h, binding.var(ids[2]), binding.var(ids[3]));
    let y = tape.tanh(y);
    let loss = tape.mse_mean(y, &[0.25, -0.5]);
    let value = tape.scalar_value(loss);
    let full = if want_grads {
        let grads = tape.backward(loss).expect("scalar root");
        ids.iter().map(|id| grads.wrt(binding.var(*id)).unwrap().to_vec()).collect()
    } else {
        Vec::new()
    };
    (value, full)
}

fn main() {
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    params.register_small("w1", vec![6, 4], 4, &mut rng);
    params.register_zeros("b1", vec![6]);
    params.register_small("w2", vec![2, 6], 6, &mut rng);
    params.register_zeros("b2", vec![2]);

    let (value, analytic) = loss_and_grad(&params, true);
    println!("loss = {value:.6}");

    // Check the largest-magnitude gradient entry of every parameter
    // tensor against a central difference.
    let eps = 1e-6;
    let ids: Vec<_> = params.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (i, (id, name)) in ids.into_iter().enumerate() {
        let j = (0..analytic[i].len())
            .max_by(|a, b| analytic[i][*a].abs().total_cmp(&analytic[i][*b].abs()))
            .unwrap();
        let a = analytic[i][j];
        let orig = params.get(id).tensor.data[j];
        params.get_mut(id).tensor.data[j] = orig + eps;
        let (hi, _) = loss_and_grad(&params, false);
        params.get_mut(id).tensor.data[j] = orig - eps;
        let (lo, _) = loss_and_grad(&params, false);
        params.get_mut(id).tensor.data[j] = orig;
        let numeric = (hi - lo) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(1e-6);
        println!("{name:>3}[{j}]: analytic {a:>12.8}  numeric {numeric:>12.8}  rel {rel:.2e}");
        assert!(a != 0.0, "expected a live gradient entry in {name}");
        assert!(rel < 1e-4, "gradient mismatch for {name}");
    }
    println!("all gradients match central finite differences");
}
