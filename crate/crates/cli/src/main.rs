use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use waverep::dataset::{SplitSpec, SplitStrategy, DEFAULT_OVERLAP, DEFAULT_PER_CLASS};
use waverep::nn::TrainConfig;
use waverep::synth::{write_corpus, SynthConfig};
use waverep::transform::TransformKind;
use waverep_cli::eval::SplitName;
use waverep_cli::{build, eval, inspect, train};

#[derive(Parser)]
#[command(name = "waverep", version, about = "Spectrogram datasets and CNN classification of music audio")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a directory of per-class WAV folders into a spectrogram dataset.
    Build(BuildCmd),
    /// Train the classifier on a dataset manifest.
    Train(TrainCmd),
    /// Evaluate a checkpoint on one split and write confusion artifacts.
    Eval(EvalCmd),
    /// Summarize a dataset directory, spectrogram file or checkpoint.
    Inspect { path: PathBuf },
    /// Write a synthetic multi-class WAV corpus.
    Synth(SynthCmd),
}

#[derive(Args)]
struct BuildCmd {
    #[arg(long, default_value = "log_stft")]
    transform: TransformKind,
    #[arg(long, default_value_t = 8000)]
    rate: u32,
    #[arg(long, default_value_t = DEFAULT_PER_CLASS)]
    per_class: usize,
    /// Seed of the per-class chunk sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    rmt_seed: u64,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    overlap: f64,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
    #[arg(long, default_value_t = 0)]
    dropout_seed: u64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    split_ratios: Vec<f64>,
    /// Apply the split within each class.
    #[arg(long, conflicts_with = "group_by_track")]
    stratify: bool,
    /// Keep all chunks of a source track in one partition.
    #[arg(long)]
    group_by_track: bool,
    /// Stop once validation error reaches this value.
    #[arg(long)]
    stop_at_val_error: Option<f64>,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: SplitName,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    tracks: usize,
    #[arg(long, default_value_t = 30.0)]
    secs: f64,
    #[arg(long, default_value_t = 16_000)]
    rate: u32,
    #[arg(long, default_value_t = 2)]
    channels: u16,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    output: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Build(c) => {
            let report = build::run(&build::BuildArgs {
                transform: c.transform,
                rate: c.rate,
                per_class: c.per_class,
                seed: c.seed,
                rmt_seed: c.rmt_seed,
                overlap: c.overlap,
                input: c.input,
                output: c.output,
            })?;
            println!("wrote {} spectrograms; manifest {}", report.written, report.manifest.display());
        }
        Command::Train(c) => {
            let strategy = if c.stratify {
                SplitStrategy::Stratified
            } else if c.group_by_track {
                SplitStrategy::GroupByTrack
            } else {
                SplitStrategy::Pooled
            };
            let ratios = [c.split_ratios[0], c.split_ratios[1], c.split_ratios[2]];
            train::run(&train::TrainArgs {
                manifest: c.manifest,
                out: c.out,
                config: TrainConfig {
                    batch_size: c.batch,
                    epochs: c.epochs,
                    learning_rate: c.lr,
                    momentum: c.momentum,
                    dropout_p: c.dropout,
                    init_seed: c.init_seed,
                    shuffle_seed: c.shuffle_seed,
                    dropout_seed: c.dropout_seed,
                    target_val_error: c.stop_at_val_error,
                },
                split: SplitSpec {
                    ratios,
                    seed: c.split_seed,
                    strategy,
                },
            })?;
        }
        Command::Eval(c) => {
            eval::run(&eval::EvalArgs {
                checkpoint: c.checkpoint,
                manifest: c.manifest,
                split: c.split,
                out: c.out,
            })?;
        }
        Command::Inspect { path } => print!("{}", inspect::describe(&path)?),
        Command::Synth(c) => {
            let paths = write_corpus(
                &c.output,
                &SynthConfig {
                    n_classes: c.classes,
                    tracks_per_class: c.tracks,
                    track_secs: c.secs,
                    sample_rate: c.rate,
                    channels: c.channels,
                    seed: c.seed,
                },
            )?;
            println!("wrote {} tracks under {}", paths.len(), c.output.display());
        }
    }
    Ok(())
}
