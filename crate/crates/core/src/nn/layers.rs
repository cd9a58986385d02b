//! Layer kernels and their backward passes.
//!
//! Activations are single examples: `C × H × W` for feature maps, flat vectors
//! for dense layers. Convolutions lower to GEMM through an im2col buffer.

use rand::Rng;

use crate::error::{Error, Result};

use super::{Real, Tensor};

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Inverted dropout with the given drop probability.
    Train { dropout_p: f64 },
    Eval,
}

fn chw(t: &Tensor<impl Real>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.dims() {
        [c, h, w] => Ok((c, h, w)),
        ref d => Err(Error::Shape(format!("{what} must be C×H×W, got {d:?}"))),
    }
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (c, h, w) = chw(input, "conv input")?;
    let (o, kc, kh, kw) = match *weight.dims() {
        [o, kc, kh, kw] => (o, kc, kh, kw),
        ref d => return Err(Error::Shape(format!("conv weight must be O×C×KH×KW, got {d:?}"))),
    };
    if kc != c {
        return Err(Error::Shape(format!(
            "conv weight expects {kc} input channels, input has {c}"
        )));
    }
    if h < kh || w < kw {
        return Err(Error::Shape(format!(
            "input {h}×{w} is smaller than the {kh}×{kw} kernel"
        )));
    }
    Ok((c, h, w, o, kh, kw))
}

/// Unfolds `C × H × W` into a `(C·KH·KW) × (Ho·Wo)` patch matrix.
fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<T> {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let mut cols = vec![T::zero(); c * kh * kw * ho * wo];
    let mut row = 0;
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for y in 0..ho {
                    let src = &plane[(y + i) * w + j..(y + i) * w + j + wo];
                    dst[y * wo..(y + 1) * wo].copy_from_slice(src);
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto the input grid.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<T> {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let mut out = vec![T::zero(); c * h * w];
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for y in 0..ho {
                    let dst = &mut plane[(y + i) * w + j..(y + i) * w + j + wo];
                    for (d, &s) in dst.iter_mut().zip(&src[y * wo..(y + 1) * wo]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Valid 2-D cross-correlation plus per-channel bias.
pub fn conv2d<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w, o, kh, kw) = conv_dims(input, weight)?;
    if bias.len() != o {
        return Err(Error::Shape(format!("conv bias has {} entries, need {o}", bias.len())));
    }
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let p = ho * wo;
    let cols = im2col(input.data(), c, h, w, kh, kw);
    let mut out = vec![T::zero(); o * p];
    for (row, &b) in out.chunks_exact_mut(p).zip(bias.data()) {
        row.fill(b);
    }
    T::gemm(o, c * kh * kw, p, T::one(), weight.data(), false, &cols, false, T::one(), &mut out);
    Tensor::new(vec![o, ho, wo], out)
}

/// Backward pass of [`conv2d`]. Weight and bias gradients are added into
/// `grad_weight` and `grad_bias`; the input gradient is returned when requested.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let (c, h, w, o, kh, kw) = conv_dims(input, weight)?;
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let p = ho * wo;
    if grad_out.dims() != [o, ho, wo] {
        return Err(Error::Shape(format!(
            "conv output gradient {:?} does not match {:?}",
            grad_out.dims(),
            [o, ho, wo]
        )));
    }
    if grad_weight.dims() != weight.dims() || grad_bias.len() != o {
        return Err(Error::Shape("conv gradient accumulators have wrong dims".into()));
    }
    let ck = c * kh * kw;
    let cols = im2col(input.data(), c, h, w, kh, kw);
    // dW (o×ck) += dY (o×p) · colsᵀ (p×ck)
    T::gemm(o, p, ck, T::one(), grad_out.data(), false, &cols, true, T::one(), grad_weight.data_mut());
    for (gb, row) in grad_bias.data_mut().iter_mut().zip(grad_out.data().chunks_exact(p)) {
        *gb += row.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    if !want_input_grad {
        return Ok(None);
    }
    // dcols (ck×p) = Wᵀ (ck×o) · dY (o×p)
    let mut dcols = cols;
    T::gemm(ck, o, p, T::one(), weight.data(), true, grad_out.data(), false, T::zero(), &mut dcols);
    Tensor::new(vec![c, h, w], col2im(&dcols, c, h, w, kh, kw)).map(Some)
}

/// Output extent of ceil-mode 2×2 pooling.
pub fn pooled(n: usize) -> usize {
    n.div_ceil(2)
}

/// 2×2 max pooling, stride 2, ceil mode: a trailing odd row or column forms a
/// partial window over the elements present. Returns the flat input index of
/// each output's maximum (first maximum in row-major order on ties).
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = chw(input, "pool input")?;
    let (ho, wo) = (pooled(h), pooled(w));
    let x = input.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut argmax = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            let y0 = 2 * oy;
            let y1 = (y0 + 2).min(h);
            for ox in 0..wo {
                let x0 = 2 * ox;
                let x1 = (x0 + 2).min(w);
                let mut best = base + y0 * w + x0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        let idx = base + y * w + xx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(vec![c, ho, wo], out)?, argmax))
}

/// Routes each output gradient to the input position that won its window.
pub fn maxpool2_backward<T: Real>(
    grad_out: &Tensor<T>,
    argmax: &[u32],
    input_dims: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape("pool gradient and argmax lengths differ".into()));
    }
    let mut grad = Tensor::zeros(input_dims);
    let g = grad.data_mut();
    for (&idx, &d) in argmax.iter().zip(grad_out.data()) {
        g[idx as usize] += d;
    }
    Ok(grad)
}

/// Affine map `W · x + b` with `W` of dims `m × n`.
pub fn dense<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = match *weight.dims() {
        [m, n] => (m, n),
        ref d => return Err(Error::Shape(format!("dense weight must be m×n, got {d:?}"))),
    };
    if x.len() != n {
        return Err(Error::Shape(format!("dense layer expects {n} inputs, got {}", x.len())));
    }
    if bias.len() != m {
        return Err(Error::Shape(format!("dense bias has {} entries, need {m}", bias.len())));
    }
    let mut out = bias.data().to_vec();
    T::gemm(m, n, 1, T::one(), weight.data(), false, x.data(), false, T::one(), &mut out);
    Tensor::new(vec![m], out)
}

/// Backward pass of [`dense`]; accumulates parameter gradients, returns `dx`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = match *weight.dims() {
        [m, n] => (m, n),
        ref d => return Err(Error::Shape(format!("dense weight must be m×n, got {d:?}"))),
    };
    if grad_out.len() != m || x.len() != n {
        return Err(Error::Shape("dense backward dims disagree".into()));
    }
    // dW += dy · xᵀ (outer product)
    T::gemm(m, 1, n, T::one(), grad_out.data(), false, x.data(), false, T::one(), grad_weight.data_mut());
    for (gb, &d) in grad_bias.data_mut().iter_mut().zip(grad_out.data()) {
        *gb += d;
    }
    let mut dx = vec![T::zero(); n];
    T::gemm(n, m, 1, T::one(), weight.data(), true, grad_out.data(), false, T::zero(), &mut dx);
    Tensor::new(vec![n], dx)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    });
    out
}

/// Gradient through ReLU given its forward output.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (d, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if !(y > T::zero()) {
            *d = T::zero();
        }
    }
    g
}

/// Per-unit multipliers of inverted dropout: 0 for dropped units,
/// `1 / (1 - p)` for survivors.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

pub fn apply_mask<T: Real>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    out
}

/// Inverted dropout. Eval mode, and `p = 0`, pass the input through untouched
/// and draw nothing from `rng`.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    match mode {
        Mode::Eval => Ok((x.clone(), None)),
        Mode::Train { dropout_p } => {
            if !(0.0..1.0).contains(&dropout_p) {
                return Err(Error::Argument(format!("dropout p={dropout_p} outside [0, 1)")));
            }
            if dropout_p == 0.0 {
                return Ok((x.clone(), None));
            }
            let mask = dropout_mask(x.len(), dropout_p, rng);
            Ok((apply_mask(x, &mask), Some(mask)))
        }
    }
}

/// Numerically stable softmax and cross-entropy `-log p[label]`.
pub fn softmax_xent<T: Real>(logits: &[T], label: usize) -> Result<(Vec<T>, T)> {
    if logits.len() < 2 {
        return Err(Error::Argument("softmax needs at least two logits".into()));
    }
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    let probs = exps.iter().map(|&e| e / sum).collect();
    let loss = sum.ln() - (logits[label] - max);
    Ok((probs, loss))
}

/// Gradient of the cross-entropy with respect to the logits: `probs - onehot`.
pub fn softmax_xent_grad<T: Real>(probs: &[T], label: usize) -> Vec<T> {
    let mut g = probs.to_vec();
    g[label] = g[label] - T::one();
    g
}
