//! Dataset assembly: overlapping chunk plans, balanced per-class sampling,
//! seeded splits, per-example normalization, and the on-disk formats
//! (spectrogram files, manifest CSV, sidecar metadata).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Example, Tensor};
use crate::transform::{Spectrogram, TransformKind, TransformSpec};

/// Fraction of a chunk shared with its successor.
pub const DEFAULT_OVERLAP: f64 = 0.8;
pub const DEFAULT_PER_CLASS: usize = 1000;
pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Start offsets of every chunk that fits in one track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk_len: usize,
    pub hop: usize,
    pub offsets: Vec<usize>,
}

/// `round((1 - overlap) × chunk_len)`, at least one sample.
pub fn hop_for(chunk_len: usize, overlap_fraction: f64) -> usize {
    (((1.0 - overlap_fraction) * chunk_len as f64).round() as usize).max(1)
}

pub fn enumerate_chunks(track_len: usize, chunk_len: usize, overlap_fraction: f64) -> Result<ChunkPlan> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::Argument(format!("overlap {overlap_fraction} outside [0, 1)")));
    }
    if chunk_len == 0 {
        return Err(Error::Argument("chunk length must be positive".into()));
    }
    if chunk_len > track_len {
        return Err(Error::EmptyPlan {
            track_len,
            chunk_len,
        });
    }
    let hop = hop_for(chunk_len, overlap_fraction);
    let offsets = (0..=track_len - chunk_len).step_by(hop).collect();
    Ok(ChunkPlan {
        chunk_len,
        hop,
        offsets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled<T> {
    pub item: T,
    pub label: usize,
}

/// Equal-count draws from every class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub examples: Vec<Labeled<T>>,
    pub class_names: Vec<String>,
    pub per_class_count: usize,
    /// Classes whose pool was smaller than `per_class_count` and so were
    /// drawn with replacement.
    pub with_replacement: Vec<usize>,
}

impl<T> LabeledSet<T> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }
}

/// Draws `n` items per class: uniformly without replacement, or with
/// replacement when a pool holds fewer than `n`. Deterministic in `seed`.
pub fn sample_per_class<T: Clone>(
    pools: &[Vec<T>],
    class_names: &[String],
    n: usize,
    seed: u64,
) -> Result<LabeledSet<T>> {
    if pools.len() != class_names.len() {
        return Err(Error::Argument(format!(
            "{} pools for {} class names",
            pools.len(),
            class_names.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n * pools.len());
    let mut with_replacement = Vec::new();
    for (label, (pool, name)) in pools.iter().zip(class_names).enumerate() {
        if pool.is_empty() {
            return Err(Error::DatasetBuild(format!("class {name:?} has no chunks")));
        }
        if pool.len() >= n {
            for i in index::sample(&mut rng, pool.len(), n) {
                examples.push(Labeled {
                    item: pool[i].clone(),
                    label,
                });
            }
        } else {
            log::warn!(
                "class {name:?}: only {} chunks for {n} draws, sampling with replacement",
                pool.len()
            );
            with_replacement.push(label);
            for _ in 0..n {
                examples.push(Labeled {
                    item: pool[rng.random_range(0..pool.len())].clone(),
                    label,
                });
            }
        }
    }
    Ok(LabeledSet {
        examples,
        class_names: class_names.to_vec(),
        per_class_count: n,
        with_replacement,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// One permutation over all examples, cut by ratio.
    Pooled,
    /// The pooled cut applied within each class.
    Stratified,
    /// Whole groups (e.g. source tracks) assigned to one partition.
    GroupByTrack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: DEFAULT_RATIOS,
            seed: 0,
            strategy: SplitStrategy::Pooled,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Argument(format!("split ratios {:?} must be positive", self.ratios)));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("split ratios {:?} sum to {sum}, not 1", self.ratios)));
        }
        Ok(())
    }

    /// Cut points `floor(r0·n)` and `floor((r0+r1)·n)`.
    pub fn cuts(&self, n: usize) -> (usize, usize) {
        // The epsilon absorbs representation error in products like 0.6 × 5.
        let a = (self.ratios[0] * n as f64 + 1e-9).floor() as usize;
        let b = ((self.ratios[0] + self.ratios[1]) * n as f64 + 1e-9).floor() as usize;
        (a.min(n), b.min(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

fn cut<T: Clone>(items: &[T], order: &[usize], spec: &SplitSpec) -> Split<T> {
    let (a, b) = spec.cuts(order.len());
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Split {
        train: pick(&order[..a]),
        val: pick(&order[a..b]),
        test: pick(&order[b..]),
    }
}

/// Seeded permutation of all items, then cut at the ratio boundaries.
pub fn shuffle_split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    split_by(items, spec, |_| 0usize)
}

/// Splits according to `spec.strategy`; `key` gives the class label for
/// stratified splits and the group id for grouped splits, and is ignored
/// for pooled splits.
pub fn split_by<T: Clone, K: Ord + Clone>(items: &[T], spec: &SplitSpec, key: impl Fn(&T) -> K) -> Result<Split<T>> {
    spec.validate()?;
    if items.len() < 5 {
        return Err(Error::Argument(format!("need at least 5 examples to split, got {}", items.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.strategy {
        SplitStrategy::Pooled => {
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut rng);
            Ok(cut(items, &order, spec))
        }
        SplitStrategy::Stratified => {
            let mut by_class: BTreeMap<K, Vec<usize>> = BTreeMap::new();
            for (i, it) in items.iter().enumerate() {
                by_class.entry(key(it)).or_default().push(i);
            }
            let mut out = Split {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for (_, mut members) in by_class {
                members.shuffle(&mut rng);
                let part = cut(items, &members, spec);
                out.train.extend(part.train);
                out.val.extend(part.val);
                out.test.extend(part.test);
            }
            out.train.shuffle(&mut rng);
            out.val.shuffle(&mut rng);
            out.test.shuffle(&mut rng);
            Ok(out)
        }
        SplitStrategy::GroupByTrack => {
            let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
            for (i, it) in items.iter().enumerate() {
                groups.entry(key(it)).or_default().push(i);
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            let (a, b) = spec.cuts(items.len());
            let mut out = Split {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            let mut seen = 0;
            for g in groups {
                let dst = if seen < a {
                    &mut out.train
                } else if seen < b {
                    &mut out.val
                } else {
                    &mut out.test
                };
                dst.extend(g.iter().map(|&i| items[i].clone()));
                seen += g.len();
            }
            Ok(out)
        }
    }
}

/// A matrix scaled to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub data: Vec<f32>,
    /// Set when the input was (numerically) constant; `data` is then all zeros.
    pub silent: bool,
}

/// Zero-mean, unit-variance scaling over all entries of one example.
pub fn normalize_example(m: &[f32]) -> Result<Normalized> {
    if m.is_empty() {
        return Err(Error::Argument("cannot normalize an empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("matrix has non-finite entries".into()));
    }
    let n = m.len() as f64;
    let mean = m.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = m.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Ok(Normalized {
            data: vec![0.0; m.len()],
            silent: true,
        });
    }
    Ok(Normalized {
        data: m.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect(),
        silent: false,
    })
}

/// Normalizes a spectrogram into a `1 × rows × cols` network input.
pub fn to_example(s: &Spectrogram) -> Result<(Example, bool)> {
    let label = s
        .label
        .ok_or_else(|| Error::Argument("spectrogram has no label".into()))?;
    let n = normalize_example(&s.data)?;
    let input = Tensor::new(vec![1, s.rows, s.cols], n.data)?;
    Ok((
        Example {
            input,
            label: label as usize,
        },
        n.silent,
    ))
}

pub const SPECTROGRAM_MAGIC: &[u8; 4] = b"SGRM";
pub const SPECTROGRAM_VERSION: u32 = 1;
const UNLABELED: u32 = u32::MAX;
const SPECTROGRAM_HEADER: usize = 4 + 4 + 4 + 4 + 4 + 1 + 4 + 8;

/// Writes the binary spectrogram format: magic `SGRM`, version, rows, cols,
/// label (`0xFFFFFFFF` if none), transform code, sample rate, random matrix
/// seed, then `rows × cols` little-endian `f32` values row-major.
pub fn write_spectrogram<W: Write>(s: &Spectrogram, mut w: W) -> Result<()> {
    if s.data.len() != s.rows * s.cols {
        return Err(Error::Shape(format!(
            "spectrogram {}×{} holds {} values",
            s.rows,
            s.cols,
            s.data.len()
        )));
    }
    let mut buf = Vec::with_capacity(SPECTROGRAM_HEADER + 4 * s.data.len());
    buf.extend_from_slice(SPECTROGRAM_MAGIC);
    buf.extend_from_slice(&SPECTROGRAM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(s.cols as u32).to_le_bytes());
    buf.extend_from_slice(&s.label.unwrap_or(UNLABELED).to_le_bytes());
    buf.push(s.spec.kind.code());
    buf.extend_from_slice(&s.spec.sample_rate.to_le_bytes());
    buf.extend_from_slice(&s.spec.rmt_seed.to_le_bytes());
    for v in &s.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_spectrogram<R: Read>(mut r: R) -> Result<Spectrogram> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_spectrogram(&bytes)
}

pub fn decode_spectrogram(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < SPECTROGRAM_HEADER {
        return Err(Error::Format(format!("spectrogram header truncated at {} bytes", bytes.len())));
    }
    if &bytes[0..4] != SPECTROGRAM_MAGIC {
        return Err(Error::Format("not a spectrogram file (bad magic)".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = u32_at(4);
    if version != SPECTROGRAM_VERSION {
        return Err(Error::Format(format!("unsupported spectrogram version {version}")));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("invalid dims {rows}×{cols}")));
    }
    let label = match u32_at(16) {
        UNLABELED => None,
        l => Some(l),
    };
    let kind = TransformKind::from_code(bytes[20])
        .ok_or_else(|| Error::Format(format!("unknown transform code {}", bytes[20])))?;
    let sample_rate = u32_at(21);
    let mut seed = [0u8; 8];
    seed.copy_from_slice(&bytes[25..33]);
    let rmt_seed = u64::from_le_bytes(seed);

    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let payload = &bytes[SPECTROGRAM_HEADER..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "header declares {rows}×{cols} ({expected} bytes) but payload is {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Spectrogram {
        rows,
        cols,
        data,
        label,
        spec: TransformSpec {
            kind,
            frame_len: rows,
            n_frames: cols,
            sample_rate,
            rmt_seed,
        },
        provenance: None,
    })
}

pub fn save_spectrogram(s: &Spectrogram, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_spectrogram(s, &mut bytes)?;
    std::fs::write(path, bytes).map_err(|e| Error::io_at(path, e))
}

pub fn load_spectrogram(path: &Path) -> Result<Spectrogram> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode_spectrogram(&bytes)
}

/// One row of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Spectrogram file, relative to the manifest's directory.
    pub path: PathBuf,
    pub label: usize,
    pub class_name: String,
    pub source_file: PathBuf,
    pub chunk_offset: usize,
}

pub const MANIFEST_HEADER: [&str; 5] = ["path", "label", "class_name", "source_file", "chunk_offset"];

pub fn write_manifest<W: Write>(rows: &[ManifestRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(MANIFEST_HEADER)?;
    for r in rows {
        out.write_record([
            r.path.to_string_lossy().as_ref(),
            &r.label.to_string(),
            &r.class_name,
            r.source_file.to_string_lossy().as_ref(),
            &r.chunk_offset.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(r: R) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Format(format!("unexpected manifest header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let num = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("manifest row {}: bad {} {:?}", i + 1, MANIFEST_HEADER[k], field(k))))
        };
        rows.push(ManifestRow {
            path: PathBuf::from(field(0)),
            label: num(1)?,
            class_name: field(2).to_string(),
            source_file: PathBuf::from(field(3)),
            chunk_offset: num(4)?,
        });
    }
    Ok(rows)
}

/// Everything needed to rebuild or audit a dataset, stored as `key=value`
/// lines next to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInfo {
    pub spec: TransformSpec,
    pub class_names: Vec<String>,
    pub per_class: usize,
    pub overlap: f64,
    pub hop: usize,
    pub dataset_seed: u64,
    pub clamped_f_max: Option<f64>,
    /// Classes sampled with replacement.
    pub with_replacement: Vec<String>,
}

impl DatasetInfo {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format=waverep-dataset-1");
        let _ = writeln!(s, "transform={}", self.spec.kind);
        let _ = writeln!(s, "frame_len={}", self.spec.frame_len);
        let _ = writeln!(s, "n_frames={}", self.spec.n_frames);
        let _ = writeln!(s, "sample_rate={}", self.spec.sample_rate);
        let _ = writeln!(s, "rmt_seed={}", self.spec.rmt_seed);
        let _ = writeln!(s, "transform_digest={}", hex::encode(self.spec.digest()));
        let _ = writeln!(s, "transform_describe={}", self.spec.describe());
        match self.clamped_f_max {
            Some(f) => {
                let _ = writeln!(s, "nyquist_clamp=f_max reduced to {f} Hz");
            }
            None => {
                let _ = writeln!(s, "nyquist_clamp=none");
            }
        }
        let _ = writeln!(s, "dataset_seed={}", self.dataset_seed);
        let _ = writeln!(s, "per_class={}", self.per_class);
        let _ = writeln!(s, "overlap={}", self.overlap);
        let _ = writeln!(s, "hop={}", self.hop);
        let _ = writeln!(s, "chunk_len={}", self.spec.chunk_len());
        let _ = writeln!(s, "classes={}", self.class_names.join(","));
        let _ = writeln!(s, "with_replacement={}", self.with_replacement.join(","));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .collect();
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Format(format!("dataset info lacks {k}")));
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("dataset info: bad {k}")))
        };
        let list = |k: &str| -> Result<Vec<String>> {
            Ok(get(k)?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect())
        };
        let spec = TransformSpec {
            kind: get("transform")?.parse()?,
            frame_len: num("frame_len")? as usize,
            n_frames: num("n_frames")? as usize,
            sample_rate: num("sample_rate")? as u32,
            rmt_seed: num("rmt_seed")?,
        };
        if hex::encode(spec.digest()) != get("transform_digest")? {
            return Err(Error::Format("dataset info digest does not match its transform fields".into()));
        }
        let clamped_f_max = spec.bank_plan()?.and_then(|p| p.clamped_f_max);
        Ok(DatasetInfo {
            spec,
            class_names: list("classes")?,
            per_class: num("per_class")? as usize,
            overlap: get("overlap")?
                .parse()
                .map_err(|_| Error::Format("dataset info: bad overlap".into()))?,
            hop: num("hop")? as usize,
            dataset_seed: num("dataset_seed")?,
            clamped_f_max,
            with_replacement: list("with_replacement")?,
        })
    }
}

/// Path of a sidecar file next to `manifest`.
pub fn sidecar_path(manifest: &Path) -> PathBuf {
    manifest.with_file_name("dataset.txt")
}
