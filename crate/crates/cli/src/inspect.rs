//! `waverep inspect`: human-readable summaries of produced artifacts.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use waverep::dataset::load_spectrogram;
use waverep::nn::Checkpoint;

use crate::build::MANIFEST;
use crate::source::Dataset;

pub fn describe(path: &Path) -> Result<String> {
    let mut s = String::new();
    if path.is_dir() {
        let data = Dataset::open(&path.join(MANIFEST))?;
        let _ = writeln!(s, "dataset {}", path.display());
        let _ = writeln!(s, "  examples: {}", data.rows.len());
        let _ = write!(s, "{}", data.info.to_text().lines().map(|l| format!("  {l}\n")).collect::<String>());
        return Ok(s);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("sgrm") => {
            let sg = load_spectrogram(path)?;
            let (min, max, sum) = sg
                .data
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY, 0f64), |(lo, hi, acc), &v| {
                    (lo.min(v), hi.max(v), acc + v as f64)
                });
            let _ = writeln!(s, "spectrogram {}", path.display());
            let _ = writeln!(s, "  dims: {}×{}", sg.rows, sg.cols);
            let _ = writeln!(s, "  label: {:?}", sg.label);
            let _ = writeln!(s, "  {}", sg.spec.describe());
            let _ = writeln!(s, "  min {min} max {max} mean {}", sum / sg.data.len() as f64);
        }
        Some("wrep") => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let cp = Checkpoint::from_bytes(&bytes)?;
            let n_params: usize = cp.params.iter().map(|p| p.weight.len() + p.bias.len()).sum();
            let _ = writeln!(s, "checkpoint {}", path.display());
            let _ = writeln!(s, "  network digest: {}", cp.digest_hex());
            let _ = writeln!(s, "  classes: {}", cp.n_classes);
            let _ = writeln!(s, "  epoch: {}", cp.meta.epoch);
            let _ = writeln!(
                s,
                "  seeds: init {} shuffle {} dropout {}",
                cp.meta.init_seed, cp.meta.shuffle_seed, cp.meta.dropout_seed
            );
            let _ = writeln!(s, "  parameters: {n_params} in {} layers", cp.params.len());
        }
        _ => bail!("don't know how to inspect {}; expected a dataset directory, .sgrm or .wrep", path.display()),
    }
    Ok(s)
}
