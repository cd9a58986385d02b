//! The `run.txt` sidecar written next to a checkpoint: everything needed to
//! reproduce the run and to recover its data split at evaluation time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use waverep::dataset::{SplitSpec, SplitStrategy};
use waverep::nn::TrainConfig;

pub const FILE_NAME: &str = "run.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub transform_digest: String,
    pub network_digest: String,
    pub class_names: Vec<String>,
    pub dataset_seed: u64,
    pub rmt_seed: u64,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_error: Option<f64>,
}

pub fn strategy_name(s: SplitStrategy) -> &'static str {
    match s {
        SplitStrategy::Pooled => "pooled",
        SplitStrategy::Stratified => "stratified",
        SplitStrategy::GroupByTrack => "group_by_track",
    }
}

fn parse_strategy(s: &str) -> Result<SplitStrategy> {
    Ok(match s {
        "pooled" => SplitStrategy::Pooled,
        "stratified" => SplitStrategy::Stratified,
        "group_by_track" => SplitStrategy::GroupByTrack,
        other => bail!("unknown split strategy {other:?}"),
    })
}

pub fn path_next_to(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name(FILE_NAME)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

impl RunInfo {
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("format", "waverep-run-1".into());
        kv("transform_digest", self.transform_digest.clone());
        kv("network_digest", self.network_digest.clone());
        kv("classes", self.class_names.join(","));
        kv("dataset_seed", self.dataset_seed.to_string());
        kv("rmt_seed", self.rmt_seed.to_string());
        kv("split_seed", self.split.seed.to_string());
        kv(
            "split_ratios",
            self.split.ratios.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        kv("split_strategy", strategy_name(self.split.strategy).into());
        kv("init_seed", t.init_seed.to_string());
        kv("shuffle_seed", t.shuffle_seed.to_string());
        kv("dropout_seed", t.dropout_seed.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("momentum", t.momentum.to_string());
        kv("dropout_p", t.dropout_p.to_string());
        kv("target_val_error", opt(t.target_val_error));
        kv("epochs_run", self.epochs_run.to_string());
        kv("best_epoch", self.best_epoch.to_string());
        kv("best_val_error", opt(self.best_val_error));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| map.get(k).copied().ok_or_else(|| anyhow!("run info lacks {k}"));
        fn num<T: std::str::FromStr>(v: &str, k: &str) -> Result<T> {
            v.parse().map_err(|_| anyhow!("run info: bad {k} {v:?}"))
        }
        let n = |k: &str| -> Result<u64> { num(get(k)?, k) };
        let f = |k: &str| -> Result<f64> { num(get(k)?, k) };
        let of = |k: &str| -> Result<Option<f64>> {
            match get(k)? {
                "none" => Ok(None),
                v => num(v, k).map(Some),
            }
        };
        let ratios: Vec<f64> = get("split_ratios")?
            .split(',')
            .map(|v| num(v, "split_ratios"))
            .collect::<Result<_>>()?;
        let ratios: [f64; 3] = ratios
            .try_into()
            .map_err(|_| anyhow!("run info: split_ratios needs three values"))?;
        Ok(RunInfo {
            transform_digest: get("transform_digest")?.into(),
            network_digest: get("network_digest")?.into(),
            class_names: get("classes")?.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            dataset_seed: n("dataset_seed")?,
            rmt_seed: n("rmt_seed")?,
            split: SplitSpec {
                ratios,
                seed: n("split_seed")?,
                strategy: parse_strategy(get("split_strategy")?)?,
            },
            train: TrainConfig {
                batch_size: n("batch_size")? as usize,
                epochs: n("epochs")? as usize,
                learning_rate: f("learning_rate")?,
                momentum: f("momentum")?,
                dropout_p: f("dropout_p")?,
                init_seed: n("init_seed")?,
                shuffle_seed: n("shuffle_seed")?,
                dropout_seed: n("dropout_seed")?,
                target_val_error: of("target_val_error")?,
            },
            epochs_run: n("epochs_run")? as usize,
            best_epoch: n("best_epoch")? as usize,
            best_val_error: of("best_val_error")?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunInfo::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
