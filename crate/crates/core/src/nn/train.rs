//! Minibatch training with per-epoch validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Checkpoint, CheckpointMeta, Mode, Network, NetworkSpec, Sgd, Tensor};

/// One labeled, already-normalized network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor<f32>,
    pub label: usize,
}

/// Random access to examples, so large datasets can stay on disk.
pub trait ExampleSource {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<Example>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSource for [Example] {
    fn len(&self) -> usize {
        <[Example]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Example> {
        <[Example]>::get(self, index)
            .cloned()
            .ok_or_else(|| Error::Argument(format!("example {index} out of range")))
    }
}

impl ExampleSource for Vec<Example> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Example> {
        ExampleSource::get(self.as_slice(), index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub dropout_p: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
    /// Stop once validation error falls to or below this value.
    pub target_val_error: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            epochs: 150,
            learning_rate: 0.01,
            momentum: 0.9,
            dropout_p: 0.3,
            init_seed: 0,
            shuffle_seed: 0,
            dropout_seed: 0,
            target_val_error: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Configuration(format!("dropout p={} outside [0, 1)", self.dropout_p)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Configuration(format!("learning rate {} invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Configuration(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// Errors and loss after one epoch. Epochs count from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Misclassification rate on the training batches, dropout active.
    pub train_error: f64,
    pub val_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation error (earliest on ties).
    pub checkpoint: Checkpoint,
    /// Parameters after the last epoch run.
    pub last: Checkpoint,
    pub curve: Vec<EpochRecord>,
}

/// Fraction of `set` that `net` misclassifies in eval mode.
pub fn error_rate<S: ExampleSource + ?Sized>(net: &Network<f32>, set: &S) -> Result<f64> {
    let mut wrong = 0usize;
    for i in 0..set.len() {
        let ex = set.get(i)?;
        if net.predict(&ex.input)? != ex.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / set.len() as f64)
}

fn check_set<S: ExampleSource + ?Sized>(name: &str, set: &S, spec: &NetworkSpec, n_classes: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Configuration(format!("{name} set is empty")));
    }
    let first = set.get(0)?;
    if first.input.dims() != spec.input {
        return Err(Error::Configuration(format!(
            "{name} examples are {:?} but the network takes {:?}",
            first.input.dims(),
            spec.input
        )));
    }
    if first.label >= n_classes {
        return Err(Error::Configuration(format!(
            "{name} label {} out of range for {n_classes} classes",
            first.label
        )));
    }
    Ok(())
}

/// Trains a freshly initialized network on `train_set`, measuring validation
/// error after every epoch. `on_epoch` sees each record as it is produced.
pub fn train<S: ExampleSource + ?Sized>(
    train_set: &S,
    val_set: &S,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_classes = spec.n_classes()?;
    check_set("training", train_set, spec, n_classes)?;
    check_set("validation", val_set, spec, n_classes)?;

    let mut net: Network<f32> = Network::init(spec.clone(), cfg.init_seed)?;
    let mut opt = Sgd::new(cfg.learning_rate as f32, cfg.momentum as f32, net.params())?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.dropout_seed);
    let mode = Mode::Train {
        dropout_p: cfg.dropout_p,
    };
    let meta = |epoch: usize| CheckpointMeta {
        epoch: epoch as u32,
        init_seed: cfg.init_seed,
        shuffle_seed: cfg.shuffle_seed,
        dropout_seed: cfg.dropout_seed,
    };

    let mut best = Checkpoint::from_network(&net, meta(0))?;
    let mut best_error = f64::INFINITY;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut wrong = 0usize;
        for (batch_idx, idx) in order.chunks(cfg.batch_size).enumerate() {
            let examples = idx
                .iter()
                .map(|&i| train_set.get(i))
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<&Tensor<f32>> = examples.iter().map(|e| &e.input).collect();
            let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
            let out = net.batch_gradients(&inputs, &labels, mode, &mut dropout_rng)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what: format!("loss {}", out.loss),
                });
            }
            opt.step(net.params_mut(), &out.grads).map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what,
                },
                other => other,
            })?;
            loss_sum += out.loss * idx.len() as f64;
            wrong += out
                .predictions
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p != l)
                .count();
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_error: wrong as f64 / train_set.len() as f64,
            val_error: error_rate(&net, val_set)?,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train error {:.4} val error {:.4}",
            record.train_loss,
            record.train_error,
            record.val_error
        );
        on_epoch(&record);
        curve.push(record);
        if record.val_error < best_error {
            best_error = record.val_error;
            best = Checkpoint::from_network(&net, meta(epoch))?;
        }
        if cfg.target_val_error.is_some_and(|t| record.val_error <= t) {
            break;
        }
    }
    let last = Checkpoint::from_network(&net, meta(curve.len()))?;
    Ok(TrainOutcome {
        checkpoint: best,
        last,
        curve,
    })
}
