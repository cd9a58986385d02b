//! Layer stacks, parameters, and forward/backward passes over whole networks.

use std::fmt::Write as _;

use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digest::sha256;
use crate::error::{Error, Result};

use super::layers::{self, pooled};
pub use super::layers::Mode;
use super::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid square convolution with bias.
    Conv { out_channels: usize, kernel: usize },
    /// 2×2 max pooling, stride 2, ceil mode.
    MaxPool2,
    Relu,
    Flatten,
    /// Inverted dropout; the rate is a training setting, see [`Mode`].
    Dropout,
    /// Fully connected layer with bias.
    Dense { out: usize },
}

impl LayerSpec {
    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

/// Input geometry and ordered layer list of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Convolution channel plan of the 204×204 classifier.
pub const CONV_CHANNELS: [usize; 6] = [32, 32, 64, 64, 128, 128];
/// Hidden dense widths of the 204×204 classifier.
pub const DENSE_WIDTHS: [usize; 2] = [512, 256];

impl NetworkSpec {
    /// Six 3×3 conv + ReLU + ceil-mode 2×2 pool blocks, then three dense
    /// layers (512, 256, `n_classes`) with dropout on each dense input and
    /// ReLU after the first two.
    pub fn table1(n_classes: usize) -> Self {
        let mut layers = Vec::new();
        for &out_channels in &CONV_CHANNELS {
            layers.push(LayerSpec::Conv {
                out_channels,
                kernel: 3,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2);
        }
        layers.push(LayerSpec::Flatten);
        for &out in &DENSE_WIDTHS {
            layers.push(LayerSpec::Dropout);
            layers.push(LayerSpec::Dense { out });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dropout);
        layers.push(LayerSpec::Dense { out: n_classes });
        NetworkSpec {
            input: [1, 204, 204],
            layers,
        }
    }

    /// Output dims after every layer, in order.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input.to_vec();
        if cur.contains(&0) {
            return Err(Error::Shape(format!("invalid input dims {cur:?}")));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur.as_slice()) {
                (LayerSpec::Conv { out_channels, kernel }, &[_, h, w]) => {
                    if kernel == 0 || h < kernel || w < kernel || out_channels == 0 {
                        return Err(Error::Shape(format!(
                            "layer {i}: {kernel}×{kernel} conv does not fit {h}×{w}"
                        )));
                    }
                    vec![out_channels, h - kernel + 1, w - kernel + 1]
                }
                (LayerSpec::MaxPool2, &[c, h, w]) => vec![c, pooled(h), pooled(w)],
                (LayerSpec::Flatten, d) => vec![d.iter().product()],
                (LayerSpec::Dense { out }, &[_]) if out > 0 => vec![out],
                (LayerSpec::Relu | LayerSpec::Dropout, d) => d.to_vec(),
                (l, d) => {
                    return Err(Error::Shape(format!("layer {i}: {l:?} cannot take input {d:?}")))
                }
            };
            out.push(cur.clone());
        }
        match out.last() {
            Some(d) if d.len() == 1 && d[0] >= 2 => Ok(out),
            _ => Err(Error::Shape("network must end in a vector of at least 2 logits".into())),
        }
    }

    pub fn n_classes(&self) -> Result<usize> {
        Ok(self.shapes()?.last().map(|d| d[0]).unwrap_or(0))
    }

    /// Weight and bias dims of each parametric layer, with Xavier fans.
    fn param_layout(&self) -> Result<Vec<ParamLayout>> {
        let shapes = self.shapes()?;
        let mut prev = self.input.to_vec();
        let mut layout = Vec::new();
        for (layer, dims) in self.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv { out_channels, kernel } => {
                    let k2 = kernel * kernel;
                    layout.push(ParamLayout {
                        weight: vec![out_channels, prev[0], kernel, kernel],
                        bias: out_channels,
                        fan_in: prev[0] * k2,
                        fan_out: out_channels * k2,
                    });
                }
                LayerSpec::Dense { out } => layout.push(ParamLayout {
                    weight: vec![out, prev[0]],
                    bias: out,
                    fan_in: prev[0],
                    fan_out: out,
                }),
                _ => {}
            }
            prev = dims.clone();
        }
        Ok(layout)
    }

    /// Canonical text form, hashed into [`NetworkSpec::digest`].
    pub fn describe(&self) -> String {
        let mut s = format!("input={}x{}x{}", self.input[0], self.input[1], self.input[2]);
        for l in &self.layers {
            let _ = match l {
                LayerSpec::Conv { out_channels, kernel } => write!(s, " conv{kernel}x{kernel}({out_channels})"),
                LayerSpec::MaxPool2 => write!(s, " maxpool2ceil"),
                LayerSpec::Relu => write!(s, " relu"),
                LayerSpec::Flatten => write!(s, " flatten"),
                LayerSpec::Dropout => write!(s, " dropout"),
                LayerSpec::Dense { out } => write!(s, " dense({out})"),
            };
        }
        s.push_str(" softmax");
        s
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.describe())
    }
}

struct ParamLayout {
    weight: Vec<usize>,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Weight and bias of one conv or dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros_like(&self) -> Self {
        Param {
            weight: Tensor::zeros(self.weight.dims()),
            bias: Tensor::zeros(self.bias.dims()),
        }
    }

    pub fn tensors(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Uniform samples in `[-L, L]`, `L = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<T: Real, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    dims: &[usize],
    rng: &mut R,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
    let data = (0..dims.iter().product::<usize>())
        .map(|_| T::from_f64_lossy(rng.sample(dist)))
        .collect();
    Tensor::new(dims.to_vec(), data).expect("dims match data")
}

/// What one example's forward pass keeps for its backward pass.
#[derive(Debug, Clone)]
enum Cached<T> {
    Conv { input: Tensor<T> },
    Pool { argmax: Vec<u32>, input_dims: Vec<usize> },
    Relu { output: Tensor<T> },
    Flatten { input_dims: Vec<usize> },
    Dropout { mask: Option<Vec<T>> },
    Dense { input: Tensor<T> },
}

/// Forward record of one example.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    layers: Vec<Cached<T>>,
    logits: Vec<T>,
}

impl<T: Real> Tape<T> {
    pub fn logits(&self) -> &[T] {
        &self.logits
    }
}

/// Mean loss and gradients of one minibatch.
#[derive(Debug, Clone)]
pub struct BatchGrad<T> {
    pub loss: f64,
    pub grads: Vec<Param<T>>,
    /// Argmax class of each example's logits.
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    pending: Option<Vec<Tape<T>>>,
}

pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Network<T> {
    /// Xavier-uniform weights from a ChaCha8 stream seeded with `seed`, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .param_layout()?
            .into_iter()
            .map(|l| Param {
                weight: xavier_init(l.fan_in, l.fan_out, &l.weight, &mut rng),
                bias: Tensor::zeros(&[l.bias]),
            })
            .collect();
        Ok(Network {
            spec,
            params,
            pending: None,
        })
    }

    /// Wraps existing parameters after checking their dims against the spec.
    pub fn from_params(spec: NetworkSpec, params: Vec<Param<T>>) -> Result<Self> {
        let layout = spec.param_layout()?;
        if layout.len() != params.len() {
            return Err(Error::Shape(format!(
                "spec has {} parametric layers, got {} parameter sets",
                layout.len(),
                params.len()
            )));
        }
        for (i, (l, p)) in layout.iter().zip(&params).enumerate() {
            if p.weight.dims() != l.weight.as_slice() || p.bias.dims() != [l.bias] {
                return Err(Error::Shape(format!(
                    "parameter set {i}: got {:?}/{:?}, spec needs {:?}/[{}]",
                    p.weight.dims(),
                    p.bias.dims(),
                    l.weight,
                    l.bias
                )));
            }
        }
        Ok(Network {
            spec,
            params,
            pending: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Param<T>> {
        self.params
    }

    pub fn zero_grads(&self) -> Vec<Param<T>> {
        self.params.iter().map(Param::zeros_like).collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.dims() != self.spec.input {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.spec.input,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Runs one example forward and records what backward needs.
    pub fn forward_tape<R: Rng + ?Sized>(&self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tape<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut cache = Vec::with_capacity(self.spec.layers.len());
        let mut params = self.params.iter();
        for layer in &self.spec.layers {
            match layer {
                LayerSpec::Conv { .. } => {
                    let p = params.next().expect("layout checked");
                    let out = layers::conv2d(&cur, &p.weight, &p.bias)?;
                    cache.push(Cached::Conv { input: cur });
                    cur = out;
                }
                LayerSpec::MaxPool2 => {
                    let (out, argmax) = layers::maxpool2(&cur)?;
                    cache.push(Cached::Pool {
                        argmax,
                        input_dims: cur.dims().to_vec(),
                    });
                    cur = out;
                }
                LayerSpec::Relu => {
                    cur = layers::relu(&cur);
                    cache.push(Cached::Relu { output: cur.clone() });
                }
                LayerSpec::Flatten => {
                    let input_dims = cur.dims().to_vec();
                    let n = cur.len();
                    cur = cur.reshape(&[n])?;
                    cache.push(Cached::Flatten { input_dims });
                }
                LayerSpec::Dropout => {
                    let (out, mask) = layers::dropout_forward(&cur, mode, rng)?;
                    cache.push(Cached::Dropout { mask });
                    cur = out;
                }
                LayerSpec::Dense { .. } => {
                    let p = params.next().expect("layout checked");
                    let out = layers::dense(&cur, &p.weight, &p.bias)?;
                    cache.push(Cached::Dense { input: cur });
                    cur = out;
                }
            }
        }
        Ok(Tape {
            layers: cache,
            logits: cur.into_data(),
        })
    }

    /// Propagates `grad_logits` back through a tape, adding parameter
    /// gradients into `grads`.
    pub fn backward_tape(&self, tape: &Tape<T>, grad_logits: &[T], grads: &mut [Param<T>]) -> Result<()> {
        if grad_logits.len() != tape.logits.len() {
            return Err(Error::Shape("logit gradient length mismatch".into()));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient accumulator count mismatch".into()));
        }
        let mut g = Tensor::new(vec![grad_logits.len()], grad_logits.to_vec())?;
        let mut pi = self.params.len();
        let first_param_layer = self.spec.layers.iter().position(LayerSpec::has_params);
        for (li, (layer, cached)) in self.spec.layers.iter().zip(&tape.layers).enumerate().rev() {
            // Nothing upstream of the first parametric layer needs a gradient.
            let want_input = Some(li) != first_param_layer;
            g = match (layer, cached) {
                (LayerSpec::Conv { .. }, Cached::Conv { input }) => {
                    pi -= 1;
                    let acc = &mut grads[pi];
                    let dx = layers::conv2d_backward(
                        input,
                        &self.params[pi].weight,
                        &g,
                        &mut acc.weight,
                        &mut acc.bias,
                        want_input,
                    )?;
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (LayerSpec::Dense { .. }, Cached::Dense { input }) => {
                    pi -= 1;
                    let acc = &mut grads[pi];
                    let dx = layers::dense_backward(input, &self.params[pi].weight, &g, &mut acc.weight, &mut acc.bias)?;
                    if !want_input {
                        break;
                    }
                    dx
                }
                (LayerSpec::MaxPool2, Cached::Pool { argmax, input_dims }) => {
                    layers::maxpool2_backward(&g, argmax, input_dims)?
                }
                (LayerSpec::Relu, Cached::Relu { output }) => layers::relu_backward(output, &g),
                (LayerSpec::Flatten, Cached::Flatten { input_dims }) => g.reshape(input_dims)?,
                (LayerSpec::Dropout, Cached::Dropout { mask }) => match mask {
                    Some(m) => layers::apply_mask(&g, m),
                    None => g,
                },
                _ => return Err(Error::State("tape does not match network layers".into())),
            };
        }
        Ok(())
    }

    /// Runs a batch forward and keeps the tapes for [`Network::backward`].
    pub fn forward<R: Rng + ?Sized>(&mut self, batch: &[Tensor<T>], mode: Mode, rng: &mut R) -> Result<Vec<Vec<T>>> {
        let tapes = batch
            .iter()
            .map(|x| self.forward_tape(x, mode, rng))
            .collect::<Result<Vec<_>>>()?;
        let logits = tapes.iter().map(|t| t.logits.clone()).collect();
        self.pending = Some(tapes);
        Ok(logits)
    }

    /// Gradient of the mean cross-entropy over the batch last passed to
    /// [`Network::forward`]. Consumes the cached tapes.
    pub fn backward(&mut self, labels: &[usize]) -> Result<BatchGrad<T>> {
        let tapes = self
            .pending
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if tapes.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} labels for a batch of {}",
                labels.len(),
                tapes.len()
            )));
        }
        let mut out = BatchAccumulator::new(self, tapes.len());
        for (tape, &label) in tapes.iter().zip(labels) {
            out.add(self, tape, label)?;
        }
        Ok(out.finish())
    }

    /// Forward and backward over a batch one example at a time, without
    /// holding every tape in memory. Equivalent to `forward` then `backward`.
    pub fn batch_gradients<R: Rng + ?Sized>(
        &self,
        batch: &[&Tensor<T>],
        labels: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<BatchGrad<T>> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(Error::Argument(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.len()
            )));
        }
        let mut out = BatchAccumulator::new(self, batch.len());
        for (x, &label) in batch.iter().zip(labels) {
            let tape = self.forward_tape(x, mode, rng)?;
            out.add(self, &tape, label)?;
        }
        Ok(out.finish())
    }

    /// Eval-mode logits of one example.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward_tape(x, Mode::Eval, &mut unused)?.logits)
    }

    /// Eval-mode class probabilities of one example.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let logits = self.logits(x)?;
        Ok(layers::softmax_xent(&logits, 0)?.0)
    }

    /// Eval-mode argmax class of one example.
    pub fn predict(&self, x: &Tensor<T>) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

struct BatchAccumulator<T> {
    scale: T,
    loss: f64,
    grads: Vec<Param<T>>,
    predictions: Vec<usize>,
}

impl<T: Real> BatchAccumulator<T> {
    fn new(net: &Network<T>, batch: usize) -> Self {
        BatchAccumulator {
            scale: T::one() / T::from_usize(batch).expect("batch size fits"),
            loss: 0.0,
            grads: net.zero_grads(),
            predictions: Vec::with_capacity(batch),
        }
    }

    fn add(&mut self, net: &Network<T>, tape: &Tape<T>, label: usize) -> Result<()> {
        let (probs, loss) = layers::softmax_xent(&tape.logits, label)?;
        self.loss += loss.to_f64().unwrap_or(f64::NAN);
        self.predictions.push(argmax(&tape.logits));
        let mut g = layers::softmax_xent_grad(&probs, label);
        g.iter_mut().for_each(|v| *v *= self.scale);
        net.backward_tape(tape, &g, &mut self.grads)
    }

    fn finish(self) -> BatchGrad<T> {
        let n = self.predictions.len() as f64;
        BatchGrad {
            loss: self.loss / n,
            grads: self.grads,
            predictions: self.predictions,
        }
    }
}
