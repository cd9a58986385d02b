//! `waverep train`: fit the classifier on a built dataset.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use waverep::dataset::SplitSpec;
use waverep::eval::write_curve;
use waverep::nn::{train, NetworkSpec, TrainConfig, TrainOutcome};

use crate::run_info::{self, RunInfo};
use crate::source::Dataset;

pub const CHECKPOINT: &str = "checkpoint.wrep";
pub const LAST_CHECKPOINT: &str = "last.wrep";
pub const CURVE: &str = "curve.csv";

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub manifest: PathBuf,
    /// Defaults to the manifest's directory.
    pub out: Option<PathBuf>,
    pub config: TrainConfig,
    pub split: SplitSpec,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub outcome: TrainOutcome,
    pub run: RunInfo,
}

pub fn output_dir(manifest: &Path, out: Option<&Path>) -> PathBuf {
    match out {
        Some(o) => o.to_path_buf(),
        None => manifest.parent().unwrap_or(Path::new(".")).to_path_buf(),
    }
}

pub fn run(args: &TrainArgs) -> Result<TrainReport> {
    let data = Dataset::open(&args.manifest)?;
    let n_classes = data.info.class_names.len();
    if n_classes < 2 {
        bail!("need at least two classes to train, dataset has {n_classes}");
    }
    let spec = NetworkSpec::table1(n_classes);
    let geometry = [1, data.info.spec.frame_len, data.info.spec.n_frames];
    if geometry != spec.input {
        bail!(
            "dataset spectrograms are {}×{} but the network takes {}×{}",
            geometry[1],
            geometry[2],
            spec.input[1],
            spec.input[2]
        );
    }
    let split = data.split(&args.split)?;
    let (a, b, c) = split.sizes();
    log::info!("split {a}/{b}/{c} (train/val/test) with seed {}", args.split.seed);
    let train_set = data.examples(split.train);
    let val_set = data.examples(split.val);

    let outcome = train(&train_set, &val_set, &spec, &args.config, |_| {})?;

    let out = output_dir(&args.manifest, args.out.as_deref());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let checkpoint = out.join(CHECKPOINT);
    fs::write(&checkpoint, outcome.checkpoint.to_bytes())?;
    fs::write(out.join(LAST_CHECKPOINT), outcome.last.to_bytes())?;
    let curve = fs::File::create(out.join(CURVE))?;
    write_curve(&outcome.curve, std::io::BufWriter::new(curve))?;

    let best = outcome.curve.iter().find(|r| r.epoch == outcome.checkpoint.meta.epoch as usize);
    let run = RunInfo {
        transform_digest: hex::encode(data.info.spec.digest()),
        network_digest: hex::encode(spec.digest()),
        class_names: data.info.class_names.clone(),
        dataset_seed: data.info.dataset_seed,
        rmt_seed: data.info.spec.rmt_seed,
        split: args.split,
        train: args.config.clone(),
        epochs_run: outcome.curve.len(),
        best_epoch: outcome.checkpoint.meta.epoch as usize,
        best_val_error: best.map(|r| r.val_error),
    };
    fs::write(run_info::path_next_to(&checkpoint), run.to_text())?;

    match outcome.curve.last() {
        Some(last) => println!(
            "final validation error {:.4} (best {:.4} at epoch {})",
            last.val_error,
            run.best_val_error.unwrap_or(f64::NAN),
            run.best_epoch
        ),
        None => println!("no epochs run; wrote the initialized network"),
    }
    Ok(TrainReport {
        checkpoint,
        outcome,
        run,
    })
}
