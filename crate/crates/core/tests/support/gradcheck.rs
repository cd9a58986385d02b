//! Central-difference gradient oracle shared by the gradient tests and the
//! acceptance suite. Everything runs in f64.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use waverep::nn::layers::{self, Mode};
use waverep::nn::{LayerSpec, Network, NetworkSpec, Param, Tensor};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 20;
/// Smallest allowed distance from a ReLU kink or a pooling tie.
const MARGIN: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn max_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + STEP;
            let up = f(&probe);
            probe[i] = x[i] - STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn tensor(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(dims.to_vec(), data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conv with loss `Σ c·y`: gradients for input, weight and bias.
pub fn conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w, o, k) = (2, 6, 5, 3, 3);
    let x = uniform(&mut rng, c * h * w, 1.0);
    let wt = uniform(&mut rng, o * c * k * k, 0.5);
    let b = uniform(&mut rng, o, 0.5);
    let coef = uniform(&mut rng, o * (h - k + 1) * (w - k + 1), 1.0);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let y = layers::conv2d(
            &tensor(&[c, h, w], x.to_vec()),
            &tensor(&[o, c, k, k], wt.to_vec()),
            &tensor(&[o], b.to_vec()),
        )
        .unwrap();
        dot(y.data(), &coef)
    };
    let dy = tensor(&[o, h - k + 1, w - k + 1], coef.clone());
    let mut gw = Tensor::zeros(&[o, c, k, k]);
    let mut gb = Tensor::zeros(&[o]);
    let dx = layers::conv2d_backward(
        &tensor(&[c, h, w], x.clone()),
        &tensor(&[o, c, k, k], wt.clone()),
        &dy,
        &mut gw,
        &mut gb,
        true,
    )
    .unwrap()
    .unwrap();
    let nx = numeric_grad(&x, |p| loss(p, &wt, &b));
    let nw = numeric_grad(&wt, |p| loss(&x, p, &b));
    let nb = numeric_grad(&b, |p| loss(&x, &wt, p));
    max_rel(dx.data(), &nx)
        .max(max_rel(gw.data(), &nw))
        .max(max_rel(gb.data(), &nb))
}

/// Max pooling over an odd-sized input with well-separated values.
pub fn pool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [2, 5, 7];
    let n = 70;
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(&mut rng);
    let x: Vec<f64> = ranks.iter().map(|&r| r as f64 * 0.05 - 1.7).collect();
    let (y, argmax) = layers::maxpool2(&tensor(&dims, x.clone())).unwrap();
    let coef = uniform(&mut rng, y.len(), 1.0);
    let dx = layers::maxpool2_backward(&tensor(y.dims(), coef.clone()), &argmax, &dims).unwrap();
    let nx = numeric_grad(&x, |p| dot(layers::maxpool2(&tensor(&dims, p.to_vec())).unwrap().0.data(), &coef));
    max_rel(dx.data(), &nx)
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (5, 7);
    let x = uniform(&mut rng, n, 1.0);
    let wt = uniform(&mut rng, m * n, 1.0);
    let b = uniform(&mut rng, m, 1.0);
    let coef = uniform(&mut rng, m, 1.0);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let y = layers::dense(&tensor(&[n], x.to_vec()), &tensor(&[m, n], wt.to_vec()), &tensor(&[m], b.to_vec())).unwrap();
        dot(y.data(), &coef)
    };
    let mut gw = Tensor::zeros(&[m, n]);
    let mut gb = Tensor::zeros(&[m]);
    let dx = layers::dense_backward(
        &tensor(&[n], x.clone()),
        &tensor(&[m, n], wt.clone()),
        &tensor(&[m], coef.clone()),
        &mut gw,
        &mut gb,
    )
    .unwrap();
    max_rel(dx.data(), &numeric_grad(&x, |p| loss(p, &wt, &b)))
        .max(max_rel(gw.data(), &numeric_grad(&wt, |p| loss(&x, p, &b))))
        .max(max_rel(gb.data(), &numeric_grad(&b, |p| loss(&x, &wt, p))))
}

/// ReLU with inputs kept at least 0.01 from zero.
pub fn relu(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..40)
        .map(|_| {
            let m = rng.random_range(0.01..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let coef = uniform(&mut rng, x.len(), 1.0);
    let y = layers::relu(&tensor(&[40], x.clone()));
    let dx = layers::relu_backward(&y, &tensor(&[40], coef.clone()));
    max_rel(dx.data(), &numeric_grad(&x, |p| dot(layers::relu(&tensor(&[40], p.to_vec())).data(), &coef)))
}

/// Dropout with its mask held fixed by reseeding the generator per call.
pub fn dropout(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, 50, 1.0);
    let coef = uniform(&mut rng, 50, 1.0);
    let mode = Mode::Train { dropout_p: 0.3 };
    let run = |p: &[f64]| {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xD20);
        layers::dropout_forward(&tensor(&[50], p.to_vec()), mode, &mut r).unwrap()
    };
    let mask = run(&x).1.expect("mask drawn in train mode");
    let dx = layers::apply_mask(&tensor(&[50], coef.clone()), &mask);
    max_rel(dx.data(), &numeric_grad(&x, |p| dot(run(p).0.data(), &coef)))
}

pub fn softmax_xent(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = uniform(&mut rng, 6, 3.0);
    let label = rng.random_range(0..6);
    let (probs, _) = layers::softmax_xent(&z, label).unwrap();
    let g = layers::softmax_xent_grad(&probs, label);
    max_rel(&g, &numeric_grad(&z, |p| layers::softmax_xent(p, label).unwrap().1))
}

/// Two conv blocks and a dense head on 1×12×12 input.
pub fn small_spec(n_classes: usize) -> NetworkSpec {
    NetworkSpec {
        input: [1, 12, 12],
        layers: vec![
            LayerSpec::Conv {
                out_channels: 2,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Dropout,
            LayerSpec::Dense { out: n_classes },
        ],
    }
}

/// Smallest distance to a ReLU kink or a pooling tie over one forward pass.
fn kink_margin(net: &Network<f64>, x: &Tensor<f64>) -> f64 {
    let mut margin = f64::INFINITY;
    let mut cur = x.clone();
    let mut params = net.params().iter();
    for layer in &net.spec().layers {
        match layer {
            LayerSpec::Conv { .. } => {
                let p = params.next().unwrap();
                cur = layers::conv2d(&cur, &p.weight, &p.bias).unwrap();
            }
            LayerSpec::Relu => {
                margin = cur.data().iter().fold(margin, |m, v| m.min(v.abs()));
                cur = layers::relu(&cur);
            }
            LayerSpec::MaxPool2 => {
                let (c, h, w) = (cur.dims()[0], cur.dims()[1], cur.dims()[2]);
                let d = cur.data();
                for ch in 0..c {
                    for i in (0..h).step_by(2) {
                        for j in (0..w).step_by(2) {
                            let mut vals: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                                .iter()
                                .filter(|(di, dj)| i + di < h && j + dj < w)
                                .map(|(di, dj)| d[(ch * h + i + di) * w + j + dj])
                                .collect();
                            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                            // Ties among zeros after ReLU carry no gradient either way.
                            if vals.len() > 1 && vals[0] > 0.0 {
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
                cur = layers::maxpool2(&cur).unwrap().0;
            }
            LayerSpec::Flatten => {
                let n = cur.len();
                cur = cur.reshape(&[n]).unwrap();
            }
            LayerSpec::Dropout => {}
            LayerSpec::Dense { .. } => {
                let p = params.next().unwrap();
                cur = layers::dense(&cur, &p.weight, &p.bias).unwrap();
            }
        }
    }
    margin
}

fn flatten_params(params: &[Param<f64>]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| p.weight.data().iter().chain(p.bias.data()).copied())
        .collect()
}

fn unflatten_params(template: &[Param<f64>], flat: &[f64]) -> Vec<Param<f64>> {
    let mut at = 0;
    let mut take = |t: &Tensor<f64>| {
        let out = tensor(t.dims(), flat[at..at + t.len()].to_vec());
        at += t.len();
        out
    };
    template
        .iter()
        .map(|p| Param {
            weight: take(&p.weight),
            bias: take(&p.bias),
        })
        .collect()
}

/// Whole-network cross-entropy gradient against finite differences, with
/// dropout active under a fixed mask. Draws are repeated until the forward
/// pass keeps `MARGIN` away from every kink.
pub fn network(seed: u64) -> f64 {
    let spec = small_spec(4);
    let mode = Mode::Train { dropout_p: 0.25 };
    for attempt in 0u64.. {
        let s = seed.wrapping_mul(7919).wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let net: Network<f64> = Network::init(spec.clone(), s).unwrap();
        // Positive biases keep most ReLUs active so the check exercises them.
        let params: Vec<Param<f64>> = net
            .params()
            .iter()
            .map(|p| Param {
                weight: p.weight.clone(),
                bias: tensor(p.bias.dims(), uniform(&mut rng, p.bias.len(), 0.2)),
            })
            .collect();
        let net = Network::from_params(spec.clone(), params).unwrap();
        let x = tensor(&[1, 12, 12], uniform(&mut rng, 144, 1.0));
        let label = rng.random_range(0..4);
        if kink_margin(&net, &x) < MARGIN {
            continue;
        }
        let loss_of = |net: &Network<f64>| {
            let mut r = ChaCha8Rng::seed_from_u64(s ^ 0xD20);
            let tape = net.forward_tape(&x, mode, &mut r).unwrap();
            layers::softmax_xent(tape.logits(), label).unwrap().1
        };
        let mut r = ChaCha8Rng::seed_from_u64(s ^ 0xD20);
        let tape = net.forward_tape(&x, mode, &mut r).unwrap();
        let (probs, _) = layers::softmax_xent(tape.logits(), label).unwrap();
        let mut grads = net.zero_grads();
        net.backward_tape(&tape, &layers::softmax_xent_grad(&probs, label), &mut grads)
            .unwrap();

        let flat = flatten_params(net.params());
        let numeric = numeric_grad(&flat, |p| {
            let probe = Network::from_params(spec.clone(), unflatten_params(net.params(), p)).unwrap();
            loss_of(&probe)
        });
        return max_rel(&flatten_params(&grads), &numeric);
    }
    unreachable!()
}

pub type Check = (&'static str, fn(u64) -> f64);

pub const CHECKS: [Check; 7] = [
    ("conv2d", conv),
    ("maxpool2", pool),
    ("dense", dense),
    ("relu", relu),
    ("dropout", dropout),
    ("softmax_xent", softmax_xent),
    ("network", network),
];

/// Worst relative error of each check over `SEEDS` seeds.
pub fn run_all() -> Vec<(&'static str, f64)> {
    CHECKS
        .iter()
        .map(|&(name, f)| (name, (0..SEEDS).map(f).fold(0.0, f64::max)))
        .collect()
}
