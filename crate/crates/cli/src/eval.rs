//! `waverep eval`: accuracy and confusion matrix on one split.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use waverep::eval::ConfusionMatrix;
use waverep::nn::{Checkpoint, ExampleSource, NetworkSpec};

use crate::run_info::{self, RunInfo};
use crate::source::Dataset;

pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_PGM: &str = "confusion.pgm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitName {
    Train,
    Val,
    #[default]
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => SplitName::Train,
            "val" => SplitName::Val,
            "test" => SplitName::Test,
            other => bail!("unknown split {other:?}; expected train, val or test"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub split: SplitName,
    /// Defaults to the checkpoint's directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub class_names: Vec<String>,
    pub csv: PathBuf,
    pub pgm: PathBuf,
}

pub fn run(args: &EvalArgs) -> Result<EvalReport> {
    let bytes = fs::read(&args.checkpoint).with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let checkpoint = Checkpoint::from_bytes(&bytes)?;
    let run = RunInfo::read(&run_info::path_next_to(&args.checkpoint))?;
    let data = Dataset::open(&args.manifest)?;

    let dataset_digest = hex::encode(data.info.spec.digest());
    if run.transform_digest != dataset_digest {
        bail!(
            "checkpoint was trained on transform {} but the dataset uses {} ({}); refusing to evaluate",
            run.transform_digest,
            dataset_digest,
            data.info.spec.describe()
        );
    }
    if run.class_names != data.info.class_names {
        bail!(
            "checkpoint classes {:?} differ from dataset classes {:?}",
            run.class_names,
            data.info.class_names
        );
    }
    let spec = NetworkSpec::table1(data.info.class_names.len());
    let net = checkpoint.into_network(spec)?;

    let split = data.split(&run.split)?;
    let rows = match args.split {
        SplitName::Train => split.train,
        SplitName::Val => split.val,
        SplitName::Test => split.test,
    };
    let set = data.examples(rows);
    let pairs: Vec<(usize, usize)> = crate::thread_pool()?.install(|| {
        (0..set.len())
            .into_par_iter()
            .map(|i| -> Result<(usize, usize)> {
                let ex = set.get(i)?;
                Ok((ex.label, net.predict(&ex.input)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let k = data.info.class_names.len();
    let confusion = ConfusionMatrix::from_pairs(k, pairs)?;

    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&out)?;
    let csv = out.join(CONFUSION_CSV);
    confusion.write_csv(&data.info.class_names, fs::File::create(&csv)?)?;
    let pgm = out.join(CONFUSION_PGM);
    fs::write(&pgm, confusion.to_pgm())?;
    let accuracy = confusion.accuracy();
    println!(
        "accuracy {:.4} on {} {:?} examples",
        accuracy,
        confusion.total(),
        args.split
    );
    Ok(EvalReport {
        accuracy,
        confusion,
        class_names: data.info.class_names,
        csv,
        pgm,
    })
}
