//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass in topological
//! order; [`Tape::backward`] walks the records in reverse and accumulates
//! gradients into every tracked leaf. Each training iteration builds a
//! fresh tape, so there is no retained graph state between steps.

use super::kernels as k;
use crate::error::NnError;

/// Dense tensor: a shape plus contiguous row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must equal shape product"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize, len: usize },
    Gather { x: Var, indices: Vec<usize> },
    Reshape(Var),
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    ConvT2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    CausalConv1d { x: Var, w: Var, b: Var },
    ConvT1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    /// 1 - <a/|a|, b/|b|>, with 1e-12 added to each norm.
    CosineDistance(Var, Var),
    /// Mean binary cross-entropy of probabilities against a constant target.
    BceMean(Var, Vec<f64>),
    /// Mean squared error against a constant target.
    MseMean(Var, Vec<f64>),
    /// Mean of scalar inputs.
    MeanStack(Vec<Var>),
}

struct Node {
    op: Op,
    value: Tensor,
    tracked: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` was tracked.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value.data[0]
    }

    fn push(&mut self, op: Op, value: Tensor, tracked: bool) -> Var {
        self.nodes.push(Node { op, value, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Tracked input: gradients will be accumulated for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Untracked input: treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t, false)
    }

    fn binary(&mut self, a: Var, b: Var, op: fn(f64, f64) -> f64, tag: fn(Var, Var) -> Op) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "elementwise op shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| op(*x, *y)).collect();
        let t = Tensor { shape: ta.shape.clone(), data };
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(tag(a, b), t, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.nodes[x.0].value;
        let out = Tensor { shape: t.shape.clone(), data: t.data.iter().map(|v| f(*v)).collect() };
        let tracked = self.tracked(x);
        self.push(op, out, tracked)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v + s, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        let tracked = self.tracked(x);
        self.push(Op::Sum(x), Tensor::scalar(s), tracked)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        let tracked = parts.iter().any(|p| self.tracked(*p));
        let n = data.len();
        self.push(Op::Concat(parts.to_vec()), Tensor::new(vec![n], data), tracked)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = &self.nodes[x.0].value;
        assert!(start + len <= t.len(), "slice out of range");
        let data = t.data[start..start + len].to_vec();
        let tracked = self.tracked(x);
        self.push(Op::Slice { x, start, len }, Tensor::new(vec![len], data), tracked)
    }

    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Var {
        let t = &self.nodes[x.0].value;
        let data: Vec<f64> = indices.iter().map(|i| t.data[*i]).collect();
        let tracked = self.tracked(x);
        let n = data.len();
        self.push(Op::Gather { x, indices: indices.to_vec() }, Tensor::new(vec![n], data), tracked)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = &self.nodes[x.0].value;
        assert_eq!(t.len(), shape.iter().product::<usize>(), "reshape size mismatch");
        let data = t.data.clone();
        let tracked = self.tracked(x);
        self.push(Op::Reshape(x), Tensor::new(shape, data), tracked)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xt, wt, bt) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        let out_dim = wt.shape[0];
        assert_eq!(wt.shape[1], xt.len(), "linear input dim mismatch");
        assert_eq!(bt.len(), out_dim);
        let mut out = vec![0.0; out_dim];
        k::linear_fwd(&xt.data, &wt.data, &bt.data, out_dim, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        self.push(Op::Linear { x, w, b }, Tensor::new(vec![out_dim], out), tracked)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (xt, wt) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (c_in, h, wd) = (xt.shape[0], xt.shape[1], xt.shape[2]);
        let (c_out, kk) = (wt.shape[0], wt.shape[2]);
        assert_eq!(wt.shape[1], c_in, "conv2d channel mismatch");
        let ho = k::conv_out(h, kk, stride, pad);
        let wo = k::conv_out(wd, kk, stride, pad);
        let mut out = vec![0.0; c_out * ho * wo];
        let bt = &self.nodes[b.0].value;
        k::conv2d_fwd(&xt.data, (c_in, h, wd), &wt.data, &bt.data, c_out, kk, stride, pad, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        self.push(Op::Conv2d { x, w, b, stride, pad }, Tensor::new(vec![c_out, ho, wo], out), tracked)
    }

    pub fn conv_t2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (xt, wt) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (c_in, h, wd) = (xt.shape[0], xt.shape[1], xt.shape[2]);
        let (c_out, kk) = (wt.shape[1], wt.shape[2]);
        assert_eq!(wt.shape[0], c_in, "conv_t2d channel mismatch");
        let ho = k::convt_out(h, kk, stride, pad);
        let wo = k::convt_out(wd, kk, stride, pad);
        let mut out = vec![0.0; c_out * ho * wo];
        let bt = &self.nodes[b.0].value;
        k::convt2d_fwd(&xt.data, (c_in, h, wd), &wt.data, &bt.data, c_out, kk, stride, pad, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        self.push(Op::ConvT2d { x, w, b, stride, pad }, Tensor::new(vec![c_out, ho, wo], out), tracked)
    }

    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xt, wt) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (c_in, t_len) = (xt.shape[0], xt.shape[1]);
        let (c_out, kk) = (wt.shape[0], wt.shape[2]);
        assert_eq!(wt.shape[1], c_in, "causal_conv1d channel mismatch");
        let mut out = vec![0.0; c_out * t_len];
        let bt = &self.nodes[b.0].value;
        k::causal_conv1d_fwd(&xt.data, (c_in, t_len), &wt.data, &bt.data, c_out, kk, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        self.push(Op::CausalConv1d { x, w, b }, Tensor::new(vec![c_out, t_len], out), tracked)
    }

    pub fn conv_t1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (xt, wt) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (c_in, t_len) = (xt.shape[0], xt.shape[1]);
        let (c_out, kk) = (wt.shape[1], wt.shape[2]);
        assert_eq!(wt.shape[0], c_in, "conv_t1d channel mismatch");
        let to = k::convt_out(t_len, kk, stride, pad);
        let mut out = vec![0.0; c_out * to];
        let bt = &self.nodes[b.0].value;
        k::convt1d_fwd(&xt.data, (c_in, t_len), &wt.data, &bt.data, c_out, kk, stride, pad, &mut out);
        let tracked = self.tracked(x) || self.tracked(w) || self.tracked(b);
        self.push(Op::ConvT1d { x, w, b, stride, pad }, Tensor::new(vec![c_out, to], out), tracked)
    }

    /// Cosine latent distance `1 - <a_n, b_n>` of the L2-normalized inputs.
    /// 1e-12 is added to each norm so an all-zero vector does not divide by zero.
    pub fn cosine_distance(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "cosine_distance shape mismatch");
        let v = cosine_distance_value(&ta.data, &tb.data);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Op::CosineDistance(a, b), Tensor::scalar(v), tracked)
    }

    pub fn bce_mean(&mut self, p: Var, target: &[f64]) -> Var {
        let tp = &self.nodes[p.0].value;
        assert_eq!(tp.len(), target.len(), "bce_mean shape mismatch");
        let n = target.len() as f64;
        let v = tp
            .data
            .iter()
            .zip(target)
            .map(|(p, t)| -(t * p.max(1e-12).ln() + (1.0 - t) * (1.0 - p).max(1e-12).ln()))
            .sum::<f64>()
            / n;
        let tracked = self.tracked(p);
        self.push(Op::BceMean(p, target.to_vec()), Tensor::scalar(v), tracked)
    }

    pub fn mse_mean(&mut self, x: Var, target: &[f64]) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.len(), target.len(), "mse_mean shape mismatch");
        let n = target.len() as f64;
        let v = tx.data.iter().zip(target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>() / n;
        let tracked = self.tracked(x);
        self.push(Op::MseMean(x, target.to_vec()), Tensor::scalar(v), tracked)
    }

    pub fn mean_stack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean_stack of empty list");
        let mut s = 0.0;
        for p in parts {
            debug_assert_eq!(self.nodes[p.0].value.len(), 1);
            s += self.nodes[p.0].value.data[0];
        }
        let tracked = parts.iter().any(|p| self.tracked(*p));
        self.push(Op::MeanStack(parts.to_vec()), Tensor::scalar(s / parts.len() as f64), tracked)
    }

    /// Reverse pass from a scalar root. Fails if the root is not a scalar or
    /// no tracked leaf feeds into it.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        let rn = &self.nodes[root.0];
        if rn.value.len() != 1 {
            return Err(NnError::NotScalar { len: rn.value.len() });
        }
        if !rn.tracked {
            return Err(NnError::UntrackedGraph);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if grads[i].is_none() || !self.nodes[i].tracked {
                continue;
            }
            let go = grads[i].take().unwrap();
            self.backprop_node(i, &go, &mut grads);
            grads[i] = Some(go);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl Fn(&mut [f64])) {
        if !self.nodes[v.0].tracked {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        contrib(slot);
    }

    fn backprop_node(&self, i: usize, go: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |g| add_into(g, go, 1.0));
                self.acc(grads, *b, |g| add_into(g, go, 1.0));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |g| add_into(g, go, 1.0));
                self.acc(grads, *b, |g| add_into(g, go, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                self.acc(grads, *a, |g| mul_into(g, go, vb));
                self.acc(grads, *b, |g| mul_into(g, go, va));
            }
            Op::Div(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                self.acc(grads, *a, |g| {
                    for ((g, go), b) in g.iter_mut().zip(go).zip(vb) {
                        *g += go / b;
                    }
                });
                self.acc(grads, *b, |g| {
                    for (((g, go), a), b) in g.iter_mut().zip(go).zip(va).zip(vb) {
                        *g -= go * a / (b * b);
                    }
                });
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.acc(grads, *x, |g| add_into(g, go, s));
            }
            Op::AddScalar(x) => self.acc(grads, *x, |g| add_into(g, go, 1.0)),
            Op::Relu(x) => {
                let vx = &self.nodes[x.0].value.data;
                self.acc(grads, *x, |g| {
                    for ((g, go), x) in g.iter_mut().zip(go).zip(vx) {
                        if *x > 0.0 {
                            *g += go;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let vy = &self.nodes[i].value.data;
                self.acc(grads, *x, |g| {
                    for ((g, go), y) in g.iter_mut().zip(go).zip(vy) {
                        *g += go * (1.0 - y * y);
                    }
                });
            }
            Op::Sigmoid(x) => {
                let vy = &self.nodes[i].value.data;
                self.acc(grads, *x, |g| {
                    for ((g, go), y) in g.iter_mut().zip(go).zip(vy) {
                        *g += go * y * (1.0 - y);
                    }
                });
            }
            Op::Exp(x) => {
                let vy = &self.nodes[i].value.data;
                self.acc(grads, *x, |g| mul_into(g, go, vy));
            }
            Op::Log(x) => {
                let vx = &self.nodes[x.0].value.data;
                self.acc(grads, *x, |g| {
                    for ((g, go), x) in g.iter_mut().zip(go).zip(vx) {
                        *g += go / x;
                    }
                });
            }
            Op::Sum(x) => {
                self.acc(grads, *x, |g| {
                    for g in g.iter_mut() {
                        *g += go[0];
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    let seg = &go[off..off + n];
                    self.acc(grads, *p, |g| add_into(g, seg, 1.0));
                    off += n;
                }
            }
            Op::Slice { x, start, len } => {
                let (start, len) = (*start, *len);
                self.acc(grads, *x, |g| {
                    for j in 0..len {
                        g[start + j] += go[j];
                    }
                });
            }
            Op::Gather { x, indices } => {
                self.acc(grads, *x, |g| {
                    for (j, idx) in indices.iter().enumerate() {
                        g[*idx] += go[j];
                    }
                });
            }
            Op::Reshape(x) => self.acc(grads, *x, |g| add_into(g, go, 1.0)),
            Op::Linear { x, w, b } => {
                let xt = &self.nodes[x.0].value;
                let wt = &self.nodes[w.0].value;
                let out_dim = wt.shape[0];
                let mut gx = vec![0.0; xt.len()];
                let mut gw = vec![0.0; wt.len()];
                let mut gb = vec![0.0; out_dim];
                k::linear_bwd(&xt.data, &wt.data, out_dim, go, &mut gx, &mut gw, &mut gb);
                self.acc(grads, *x, |g| add_into(g, &gx, 1.0));
                self.acc(grads, *w, |g| add_into(g, &gw, 1.0));
                self.acc(grads, *b, |g| add_into(g, &gb, 1.0));
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xt = &self.nodes[x.0].value;
                let wt = &self.nodes[w.0].value;
                let (c_in, h, wd) = (xt.shape[0], xt.shape[1], xt.shape[2]);
                let (c_out, kk) = (wt.shape[0], wt.shape[2]);
                let mut gx = vec![0.0; xt.len()];
                let mut gw = vec![0.0; wt.len()];
                let mut gb = vec![0.0; c_out];
                k::conv2d_bwd(
                    &xt.data, (c_in, h, wd), &wt.data, c_out, kk, *stride, *pad, go, &mut gx,
                    &mut gw, &mut gb,
                );
                self.acc(grads, *x, |g| add_into(g, &gx, 1.0));
                self.acc(grads, *w, |g| add_into(g, &gw, 1.0));
                self.acc(grads, *b, |g| add_into(g, &gb, 1.0));
            }
            Op::ConvT2d { x, w, b, stride, pad } => {
                let xt = &self.nodes[x.0].value;
                let wt = &self.nodes[w.0].value;
                let (c_in, h, wd) = (xt.shape[0], xt.shape[1], xt.shape[2]);
                let (c_out, kk) = (wt.shape[1], wt.shape[2]);
                let mut gx = vec![0.0; xt.len()];
                let mut gw = vec![0.0; wt.len()];
                let mut gb = vec![0.0; c_out];
                k::convt2d_bwd(
                    &xt.data, (c_in, h, wd), &wt.data, c_out, kk, *stride, *pad, go, &mut gx,
                    &mut gw, &mut gb,
                );
                self.acc(grads, *x, |g| add_into(g, &gx, 1.0));
                self.acc(grads, *w, |g| add_into(g, &gw, 1.0));
                self.acc(grads, *b, |g| add_into(g, &gb, 1.0));
            }
            Op::CausalConv1d { x, w, b } => {
                let xt = &self.nodes[x.0].value;
                let wt = &self.nodes[w.0].value;
                let (c_in, t_len) = (xt.shape[0], xt.shape[1]);
                let (c_out, kk) = (wt.shape[0], wt.shape[2]);
                let mut gx = vec![0.0; xt.len()];
                let mut gw = vec![0.0; wt.len()];
                let mut gb = vec![0.0; c_out];
                k::causal_conv1d_bwd(
                    &xt.data, (c_in, t_len), &wt.data, c_out, kk, go, &mut gx, &mut gw, &mut gb,
                );
                self.acc(grads, *x, |g| add_into(g, &gx, 1.0));
                self.acc(grads, *w, |g| add_into(g, &gw, 1.0));
                self.acc(grads, *b, |g| add_into(g, &gb, 1.0));
            }
            Op::ConvT1d { x, w, b, stride, pad } => {
                let xt = &self.nodes[x.0].value;
                let wt = &self.nodes[w.0].value;
                let (c_in, t_len) = (xt.shape[0], xt.shape[1]);
                let (c_out, kk) = (wt.shape[1], wt.shape[2]);
                let mut gx = vec![0.0; xt.len()];
                let mut gw = vec![0.0; wt.len()];
                let mut gb = vec![0.0; c_out];
                k::convt1d_bwd(
                    &xt.data, (c_in, t_len), &wt.data, c_out, kk, *stride, *pad, go, &mut gx,
                    &mut gw, &mut gb,
                );
                self.acc(grads, *x, |g| add_into(g, &gx, 1.0));
                self.acc(grads, *w, |g| add_into(g, &gw, 1.0));
                self.acc(grads, *b, |g| add_into(g, &gb, 1.0));
            }
            Op::CosineDistance(a, b) => {
                let va = &self.nodes[a.0].value.data;
                let vb = &self.nodes[b.0].value.data;
                let (ga, gb) = cosine_distance_grad(va, vb);
                let g0 = go[0];
                self.acc(grads, *a, |g| add_into(g, &ga, g0));
                self.acc(grads, *b, |g| add_into(g, &gb, g0));
            }
            Op::BceMean(p, target) => {
                let vp = &self.nodes[p.0].value.data;
                let n = target.len() as f64;
                self.acc(grads, *p, |g| {
                    for ((g, p), t) in g.iter_mut().zip(vp).zip(target) {
                        let p = p.clamp(1e-12, 1.0 - 1e-12);
                        *g += go[0] * (-t / p + (1.0 - t) / (1.0 - p)) / n;
                    }
                });
            }
            Op::MseMean(x, target) => {
                let vx = &self.nodes[x.0].value.data;
                let n = target.len() as f64;
                self.acc(grads, *x, |g| {
                    for ((g, x), t) in g.iter_mut().zip(vx).zip(target) {
                        *g += go[0] * 2.0 * (x - t) / n;
                    }
                });
            }
            Op::MeanStack(parts) => {
                let scale = go[0] / parts.len() as f64;
                for p in parts {
                    self.acc(grads, *p, |g| g[0] += scale);
                }
            }
        }
    }
}

fn add_into(g: &mut [f64], src: &[f64], s: f64) {
    for (g, v) in g.iter_mut().zip(src) {
        *g += v * s;
    }
}

fn mul_into(g: &mut [f64], go: &[f64], other: &[f64]) {
    for ((g, go), o) in g.iter_mut().zip(go).zip(other) {
        *g += go * o;
    }
}

/// Value of the guarded cosine distance (shared with the fused tape op).
pub fn cosine_distance_value(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot / (na * nb)
}

fn cosine_distance_grad(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // d/da of -(a.b)/(|a||b|) = -b/(|a||b|) + (a.b) a / (|a|^3 |b|)
    let ga = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| -bi / (na * nb) + dot * ai / (na * na * na * nb))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| -ai / (na * nb) + dot * bi / (na * nb * nb * nb))
        .collect();
    (ga, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // d/dx x^2 at x = 3 is 6.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x);
        let g = tape.backward(y).unwrap();
        assert_eq!(tape.scalar_value(y), 9.0);
        assert_eq!(g.wrt(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let y = tape.relu(x);
        assert!(matches!(tape.backward(y), Err(NnError::NotScalar { .. })));
    }

    #[test]
    fn backward_on_untracked_graph_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(3.0));
        let y = tape.mul(x, x);
        assert!(matches!(tape.backward(y), Err(NnError::UntrackedGraph)));
    }

    #[test]
    fn cosine_distance_endpoints() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2], vec![1.0, 0.0]));
        let b = tape.leaf(Tensor::new(vec![2], vec![0.0, 1.0]));
        let c = tape.leaf(Tensor::new(vec![2], vec![-1.0, 0.0]));
        let same = tape.cosine_distance(a, a);
        let orth = tape.cosine_distance(a, b);
        let anti = tape.cosine_distance(a, c);
        assert!(tape.scalar_value(same).abs() < 1e-9);
        assert!((tape.scalar_value(orth) - 1.0).abs() < 1e-9);
        assert!((tape.scalar_value(anti) - 2.0).abs() < 1e-9);
    }
}
