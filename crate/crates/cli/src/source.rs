//! Dataset loading: manifest plus sidecar, splits, and a disk-backed example source.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use waverep::dataset::{load_spectrogram, read_manifest, sidecar_path, split_by, to_example, DatasetInfo, ManifestRow, Split, SplitSpec, SplitStrategy};
use waverep::nn::{Example, ExampleSource};
use waverep::Error;

pub struct Dataset {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub info: DatasetInfo,
}

impl Dataset {
    pub fn open(manifest: &Path) -> Result<Self> {
        let file = fs::File::open(manifest).with_context(|| format!("opening manifest {}", manifest.display()))?;
        let rows = read_manifest(std::io::BufReader::new(file))?;
        let sidecar = sidecar_path(manifest);
        let text = fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
        let info = DatasetInfo::parse(&text)?;
        let root = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Dataset { root, rows, info })
    }

    /// Partition of the manifest rows under `spec`: grouping uses the source
    /// file, stratification the label.
    pub fn split(&self, spec: &SplitSpec) -> Result<Split<ManifestRow>> {
        let split = split_by(&self.rows, spec, |r| match spec.strategy {
            SplitStrategy::Pooled => String::new(),
            SplitStrategy::Stratified => format!("{:010}", r.label),
            SplitStrategy::GroupByTrack => r.source_file.to_string_lossy().into_owned(),
        })?;
        Ok(split)
    }

    pub fn examples(&self, rows: Vec<ManifestRow>) -> DiskExamples {
        DiskExamples {
            root: self.root.clone(),
            digest: self.info.spec.digest(),
            rows,
        }
    }
}

/// Examples read and normalized from spectrogram files on each access.
pub struct DiskExamples {
    root: PathBuf,
    digest: [u8; 32],
    rows: Vec<ManifestRow>,
}

impl ExampleSource for DiskExamples {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn get(&self, index: usize) -> waverep::Result<Example> {
        let row = self
            .rows
            .get(index)
            .ok_or_else(|| Error::Argument(format!("example {index} out of range")))?;
        let s = load_spectrogram(&self.root.join(&row.path))?;
        if s.spec_digest() != self.digest {
            return Err(Error::Configuration(format!(
                "{} was made with a different transform than the dataset",
                row.path.display()
            )));
        }
        if s.label != Some(row.label as u32) {
            return Err(Error::Format(format!(
                "{} carries label {:?}, manifest says {}",
                row.path.display(),
                s.label,
                row.label
            )));
        }
        let (example, silent) = to_example(&s)?;
        if silent {
            log::debug!("{} is silent; using an all-zero input", row.path.display());
        }
        Ok(example)
    }
}
