#[path = "support/gradcheck.rs"]
mod gradcheck;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gradcheck::{small_spec, TOLERANCE};
use waverep::nn::{Mode, Network, Param, Tensor};

#[test]
fn every_layer_matches_finite_differences() {
    for (name, worst) in gradcheck::run_all() {
        eprintln!("{name}: worst relative error {worst:e}");
        assert!(worst < TOLERANCE, "{name}: relative error {worst:e}");
    }
}

fn input(seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![1, 12, 12], (0..144).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn duplicated_example_gives_single_example_gradient() {
    let net: Network<f64> = Network::init(small_spec(4), 3).unwrap();
    let x = input(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let one = net.batch_gradients(&[&x], &[2], Mode::Eval, &mut rng).unwrap();
    let two = net.batch_gradients(&[&x, &x], &[2, 2], Mode::Eval, &mut rng).unwrap();
    assert!((one.loss - two.loss).abs() < 1e-12);
    for (a, b) in one.grads.iter().zip(&two.grads) {
        for (ta, tb) in a.tensors().iter().zip(b.tensors()) {
            for (u, v) in ta.data().iter().zip(tb.data()) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }
}

#[test]
fn zero_head_gives_uniform_softmax_gradient() {
    let k = 4;
    let net: Network<f64> = Network::init(small_spec(k), 5).unwrap();
    let mut params = net.params().to_vec();
    let last = params.last_mut().unwrap();
    *last = Param {
        weight: Tensor::zeros(last.weight.dims()),
        bias: Tensor::zeros(last.bias.dims()),
    };
    let net = Network::from_params(small_spec(k), params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let label = 1;
    let out = net.batch_gradients(&[&input(2)], &[label], Mode::Eval, &mut rng).unwrap();
    assert!((out.loss - (k as f64).ln()).abs() < 1e-12);
    let bias_grad = out.grads.last().unwrap().bias.data();
    for (j, &g) in bias_grad.iter().enumerate() {
        let expect = 1.0 / k as f64 - if j == label { 1.0 } else { 0.0 };
        assert!((g - expect).abs() < 1e-12, "j={j} g={g}");
    }
    // Zero head weights block every upstream gradient.
    for p in &out.grads[..out.grads.len() - 1] {
        assert!(p.weight.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn streamed_batch_equals_forward_then_backward() {
    let mut net: Network<f64> = Network::init(small_spec(3), 9).unwrap();
    let xs: Vec<Tensor<f64>> = (10..15).map(input).collect();
    let labels = [0, 1, 2, 1, 0];
    let mode = Mode::Train { dropout_p: 0.3 };
    let refs: Vec<&Tensor<f64>> = xs.iter().collect();
    let streamed = net
        .batch_gradients(&refs, &labels, mode, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    net.forward(&xs, mode, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let cached = net.backward(&labels).unwrap();
    assert_eq!(streamed.loss, cached.loss);
    assert_eq!(streamed.predictions, cached.predictions);
    assert_eq!(streamed.grads, cached.grads);
}
