//! Dense numerical kernels behind the tape ops.
//!
//! All layouts are channel-major: images are `[C, H, W]`, time series are
//! `[C, T]`, linear weights are `[out, in]`. Convolution weights are
//! `[out_c, in_c, kh, kw]` and transposed-convolution weights are
//! `[in_c, out_c, kh, kw]`.

/// Output spatial size of a strided convolution.
pub fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
pub fn convt_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size - 1) * stride + k - 2 * pad
}

pub fn conv2d_fwd(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    wt: &[f64],
    b: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out: &mut [f64],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    for o in 0..c_out {
        let out_o = &mut out[o * ho * wo..(o + 1) * ho * wo];
        for v in out_o.iter_mut() {
            *v = b[o];
        }
        for c in 0..c_in {
            let xc = &x[c * h * w..(c + 1) * h * w];
            let wk = &wt[(o * c_in + c) * k * k..(o * c_in + c + 1) * k * k];
            for oy in 0..ho {
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &xc[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wk[ky * k + kx] * row[ix as usize];
                        }
                        out_o[oy * wo + ox] += acc;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    wt: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gout: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    for o in 0..c_out {
        let go = &gout[o * ho * wo..(o + 1) * ho * wo];
        for v in go {
            gb[o] += *v;
        }
        for c in 0..c_in {
            let xc = &x[c * h * w..(c + 1) * h * w];
            let gxc = &mut gx[c * h * w..(c + 1) * h * w];
            let wk = &wt[(o * c_in + c) * k * k..(o * c_in + c + 1) * k * k];
            let gwk = &mut gw[(o * c_in + c) * k * k..(o * c_in + c + 1) * k * k];
            for oy in 0..ho {
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..wo {
                        let g = go[oy * wo + ox];
                        if g == 0.0 {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let ix = ix as usize;
                            gxc[iy * w + ix] += wk[ky * k + kx] * g;
                            gwk[ky * k + kx] += xc[iy * w + ix] * g;
                        }
                    }
                }
            }
        }
    }
}

pub fn convt2d_fwd(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    wt: &[f64],
    b: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out: &mut [f64],
) {
    let ho = convt_out(h, k, stride, pad);
    let wo = convt_out(w, k, stride, pad);
    for o in 0..c_out {
        for v in out[o * ho * wo..(o + 1) * ho * wo].iter_mut() {
            *v = b[o];
        }
    }
    for c in 0..c_in {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for o in 0..c_out {
            let wk = &wt[(c * c_out + o) * k * k..(c * c_out + o + 1) * k * k];
            let out_o = &mut out[o * ho * wo..(o + 1) * ho * wo];
            for y in 0..h {
                for x_ in 0..w {
                    let v = xc[y * w + x_];
                    if v == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let oy = (y * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy >= ho as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ox = (x_ * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox >= wo as isize {
                                continue;
                            }
                            out_o[oy as usize * wo + ox as usize] += wk[ky * k + kx] * v;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn convt2d_bwd(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    wt: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gout: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let ho = convt_out(h, k, stride, pad);
    let wo = convt_out(w, k, stride, pad);
    for o in 0..c_out {
        for v in &gout[o * ho * wo..(o + 1) * ho * wo] {
            gb[o] += *v;
        }
    }
    for c in 0..c_in {
        let xc = &x[c * h * w..(c + 1) * h * w];
        let gxc = &mut gx[c * h * w..(c + 1) * h * w];
        for o in 0..c_out {
            let wk = &wt[(c * c_out + o) * k * k..(c * c_out + o + 1) * k * k];
            let gwk = &mut gw[(c * c_out + o) * k * k..(c * c_out + o + 1) * k * k];
            let go = &gout[o * ho * wo..(o + 1) * ho * wo];
            for y in 0..h {
                for x_ in 0..w {
                    let xv = xc[y * w + x_];
                    let mut acc = 0.0;
                    for ky in 0..k {
                        let oy = (y * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy >= ho as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ox = (x_ * stride + kx) as isize - pad as isize;
                            if ox < 0 || ox >= wo as isize {
                                continue;
                            }
                            let g = go[oy as usize * wo + ox as usize];
                            acc += wk[ky * k + kx] * g;
                            gwk[ky * k + kx] += xv * g;
                        }
                    }
                    gxc[y * w + x_] += acc;
                }
            }
        }
    }
}

/// Causal 1-D convolution: output step `t` sees inputs at steps `<= t` only
/// (left zero padding of `k - 1`).
pub fn causal_conv1d_fwd(
    x: &[f64],
    (c_in, t_len): (usize, usize),
    wt: &[f64],
    b: &[f64],
    c_out: usize,
    k: usize,
    out: &mut [f64],
) {
    for o in 0..c_out {
        for t in 0..t_len {
            let mut acc = b[o];
            for c in 0..c_in {
                let wk = &wt[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for j in 0..k {
                    let it = t as isize - (k as isize - 1) + j as isize;
                    if it >= 0 {
                        acc += wk[j] * x[c * t_len + it as usize];
                    }
                }
            }
            out[o * t_len + t] = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn causal_conv1d_bwd(
    x: &[f64],
    (c_in, t_len): (usize, usize),
    wt: &[f64],
    c_out: usize,
    k: usize,
    gout: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    for o in 0..c_out {
        for t in 0..t_len {
            let g = gout[o * t_len + t];
            gb[o] += g;
            if g == 0.0 {
                continue;
            }
            for c in 0..c_in {
                let wk = &wt[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                let gwk = &mut gw[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for j in 0..k {
                    let it = t as isize - (k as isize - 1) + j as isize;
                    if it >= 0 {
                        gx[c * t_len + it as usize] += wk[j] * g;
                        gwk[j] += x[c * t_len + it as usize] * g;
                    }
                }
            }
        }
    }
}

pub fn convt1d_fwd(
    x: &[f64],
    (c_in, t_len): (usize, usize),
    wt: &[f64],
    b: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out: &mut [f64],
) {
    let to = convt_out(t_len, k, stride, pad);
    for o in 0..c_out {
        for v in out[o * to..(o + 1) * to].iter_mut() {
            *v = b[o];
        }
    }
    for c in 0..c_in {
        for o in 0..c_out {
            let wk = &wt[(c * c_out + o) * k..(c * c_out + o + 1) * k];
            for t in 0..t_len {
                let v = x[c * t_len + t];
                for j in 0..k {
                    let ot = (t * stride + j) as isize - pad as isize;
                    if ot >= 0 && (ot as usize) < to {
                        out[o * to + ot as usize] += wk[j] * v;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn convt1d_bwd(
    x: &[f64],
    (c_in, t_len): (usize, usize),
    wt: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gout: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let to = convt_out(t_len, k, stride, pad);
    for o in 0..c_out {
        for v in &gout[o * to..(o + 1) * to] {
            gb[o] += *v;
        }
    }
    for c in 0..c_in {
        for o in 0..c_out {
            let wk = &wt[(c * c_out + o) * k..(c * c_out + o + 1) * k];
            let gwk = &mut gw[(c * c_out + o) * k..(c * c_out + o + 1) * k];
            for t in 0..t_len {
                let xv = x[c * t_len + t];
                let mut acc = 0.0;
                for j in 0..k {
                    let ot = (t * stride + j) as isize - pad as isize;
                    if ot >= 0 && (ot as usize) < to {
                        let g = gout[o * to + ot as usize];
                        acc += wk[j] * g;
                        gwk[j] += xv * g;
                    }
                }
                gx[c * t_len + t] += acc;
            }
        }
    }
}

pub fn linear_fwd(x: &[f64], wt: &[f64], b: &[f64], out_dim: usize, out: &mut [f64]) {
    let in_dim = x.len();
    for o in 0..out_dim {
        let row = &wt[o * in_dim..(o + 1) * in_dim];
        let mut acc = b[o];
        for i in 0..in_dim {
            acc += row[i] * x[i];
        }
        out[o] = acc;
    }
}

pub fn linear_bwd(
    x: &[f64],
    wt: &[f64],
    out_dim: usize,
    gout: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let in_dim = x.len();
    for o in 0..out_dim {
        let g = gout[o];
        gb[o] += g;
        let row = &wt[o * in_dim..(o + 1) * in_dim];
        let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            gx[i] += row[i] * g;
            grow[i] += x[i] * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_out_sizes() {
        assert_eq!(conv_out(32, 3, 2, 1), 16);
        assert_eq!(conv_out(16, 3, 2, 1), 8);
        assert_eq!(convt_out(2, 4, 2, 1), 4);
        assert_eq!(convt_out(16, 4, 2, 1), 32);
    }

    #[test]
    fn conv1d_is_causal() {
        // Perturbing input at step t must not change outputs before t.
        let (c_in, t_len, c_out, k) = (2, 8, 3, 2);
        let wt: Vec<f64> = (0..c_out * c_in * k).map(|i| 0.1 * i as f64 - 0.3).collect();
        let b = vec![0.05; c_out];
        let x: Vec<f64> = (0..c_in * t_len).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut base = vec![0.0; c_out * t_len];
        causal_conv1d_fwd(&x, (c_in, t_len), &wt, &b, c_out, k, &mut base);
        for t_pert in 0..t_len {
            let mut xp = x.clone();
            xp[t_pert] += 1.0; // channel 0, step t_pert
            let mut out = vec![0.0; c_out * t_len];
            causal_conv1d_fwd(&xp, (c_in, t_len), &wt, &b, c_out, k, &mut out);
            for o in 0..c_out {
                for t in 0..t_pert {
                    assert_eq!(out[o * t_len + t], base[o * t_len + t]);
                }
            }
        }
    }

    #[test]
    fn convt2d_adjoint_of_conv2d() {
        // <conv(x), y> == <x, convT(y)> with shared weights and zero bias.
        let (c_in, h, w, c_out, k, s, p) = (2, 7, 7, 3, 3, 2, 1);
        let ho = conv_out(h, k, s, p);
        let wt: Vec<f64> = (0..c_out * c_in * k * k)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.07)
            .collect();
        let x: Vec<f64> = (0..c_in * h * w).map(|i| (i as f64 * 0.3).cos()).collect();
        let y: Vec<f64> = (0..c_out * ho * ho).map(|i| (i as f64 * 0.5).sin()).collect();
        let mut cx = vec![0.0; c_out * ho * ho];
        conv2d_fwd(&x, (c_in, h, w), &wt, &vec![0.0; c_out], c_out, k, s, p, &mut cx);
        // Conv weight [O,C,k,k] is already convT's [in,out,k,k] once the
        // channel roles swap, so the same buffer transposes the map.
        let mut cty = vec![0.0; c_in * h * w];
        convt2d_fwd(&y, (c_out, ho, ho), &wt, &vec![0.0; c_in], c_in, k, s, p, &mut cty);
        let a: f64 = cx.iter().zip(&y).map(|(u, v)| u * v).sum();
        let b: f64 = x.iter().zip(&cty).map(|(u, v)| u * v).sum();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}
