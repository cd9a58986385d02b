//! Chunk-to-matrix transforms: log- and linear-spaced filter-bank power
//! spectrograms, and per-frame projection through a fixed Gaussian random matrix.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::digest::sha256;
use crate::error::{Error, Result};

/// Lowest filter center, C0.
pub const F_MIN: f64 = 16.35;
/// Highest filter center, F8.
pub const F_MAX: f64 = 5587.65;
pub const DEFAULT_FRAME_LEN: usize = 204;
pub const DEFAULT_N_FRAMES: usize = 204;
/// Filter centers may not exceed this fraction of the Nyquist frequency.
pub const NYQUIST_GUARD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Log,
    Linear,
}

/// Center frequencies of a bank of filters, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    centers: Vec<f64>,
    kind: FilterKind,
}

impl FilterBank {
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Builds a bank from explicit centers, e.g. DFT bin frequencies.
    pub fn from_centers(centers: Vec<f64>, kind: FilterKind) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Argument("filter bank needs at least one center".into()));
        }
        if centers.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Argument("filter centers must be finite and non-negative".into()));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("filter centers must be strictly increasing".into()));
        }
        Ok(FilterBank { centers, kind })
    }
}

fn check_range(f_min: f64, f_max: f64, count: usize) -> Result<()> {
    if !(f_min > 0.0 && f_min < f_max && f_max.is_finite()) {
        return Err(Error::Argument(format!(
            "need 0 < f_min < f_max, got f_min={f_min}, f_max={f_max}"
        )));
    }
    if count < 2 {
        return Err(Error::Argument(format!("need at least 2 filters, got {count}")));
    }
    Ok(())
}

/// Centers spaced uniformly on a log-frequency axis:
/// `f_min * (f_max / f_min)^(k / (count - 1))`.
pub fn log_centers(f_min: f64, f_max: f64, count: usize) -> Result<FilterBank> {
    check_range(f_min, f_max, count)?;
    let span = (f_max / f_min).ln();
    let last = (count - 1) as f64;
    let mut centers: Vec<f64> = (0..count)
        .map(|k| f_min * (span * k as f64 / last).exp())
        .collect();
    centers[count - 1] = f_max;
    Ok(FilterBank {
        centers,
        kind: FilterKind::Log,
    })
}

/// Centers spaced uniformly on a linear frequency axis.
pub fn linear_centers(f_min: f64, f_max: f64, count: usize) -> Result<FilterBank> {
    check_range(f_min, f_max, count)?;
    let step = (f_max - f_min) / (count - 1) as f64;
    let mut centers: Vec<f64> = (0..count).map(|k| f_min + k as f64 * step).collect();
    centers[count - 1] = f_max;
    Ok(FilterBank {
        centers,
        kind: FilterKind::Linear,
    })
}

/// Splits a chunk into `n_frames` consecutive non-overlapping rectangular frames.
pub fn frame_signal<T>(chunk: &[T], frame_len: usize, n_frames: usize) -> Result<Vec<&[T]>> {
    if frame_len == 0 || n_frames == 0 {
        return Err(Error::Argument("frame length and count must be positive".into()));
    }
    if chunk.len() != frame_len * n_frames {
        return Err(Error::Argument(format!(
            "chunk of {} samples cannot hold {} frames of {}",
            chunk.len(),
            n_frames,
            frame_len
        )));
    }
    Ok(chunk.chunks_exact(frame_len).collect())
}

/// Cosine and sine rows of the analysis basis at one center frequency.
fn basis_row(center: f64, sample_rate: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|t| {
            let phase = 2.0 * PI * center * t as f64 / sample_rate;
            (phase.cos(), phase.sin())
        })
        .unzip()
}

fn power_against(frame: &[f64], cos_row: &[f64], sin_row: &[f64]) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for ((&x, &c), &s) in frame.iter().zip(cos_row).zip(sin_row) {
        re += x * c;
        im -= x * s;
    }
    re * re + im * im
}

fn check_nyquist(bank: &FilterBank, sample_rate: f64) -> Result<()> {
    let nyquist = sample_rate / 2.0;
    match bank.centers.iter().find(|&&c| c >= nyquist) {
        Some(c) => Err(Error::Configuration(format!(
            "filter center {c} Hz is at or above the Nyquist frequency {nyquist} Hz"
        ))),
        None => Ok(()),
    }
}

/// Squared magnitude of the frame's projection onto a complex exponential at
/// each bank center: `|Σ_t frame[t] · exp(-2πi · f_k · t / sample_rate)|²`.
pub fn filterbank_power(frame: &[f64], bank: &FilterBank, sample_rate: f64) -> Result<Vec<f64>> {
    if frame.is_empty() {
        return Err(Error::Argument("empty frame".into()));
    }
    check_nyquist(bank, sample_rate)?;
    Ok(bank
        .centers
        .iter()
        .map(|&c| {
            let (cos_row, sin_row) = basis_row(c, sample_rate, frame.len());
            power_against(frame, &cos_row, &sin_row)
        })
        .collect())
}

/// A dense square matrix of iid standard normal entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RandomMatrix {
    /// Wraps explicit row-major values; used to plug in known matrices.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Argument(format!(
                "{} values cannot form a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(RandomMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws an `n × n` matrix of standard normals from ChaCha20 seeded with `seed`.
pub fn make_random_matrix(seed: u64, n: usize) -> RandomMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    RandomMatrix { n, data }
}

/// Matrix-vector product `R · frame`, keeping the sign.
pub fn rmt_project(frame: &[f64], r: &RandomMatrix) -> Result<Vec<f64>> {
    if frame.len() != r.n {
        return Err(Error::Argument(format!(
            "frame of length {} does not match {}x{} matrix",
            frame.len(),
            r.n,
            r.n
        )));
    }
    Ok(r.data
        .chunks_exact(r.n)
        .map(|row| row.iter().zip(frame).map(|(a, b)| a * b).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    LogStft,
    LinearStft,
    Rmt,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [
        TransformKind::LogStft,
        TransformKind::LinearStft,
        TransformKind::Rmt,
    ];

    /// Byte code used in spectrogram files.
    pub fn code(self) -> u8 {
        match self {
            TransformKind::LogStft => 0,
            TransformKind::LinearStft => 1,
            TransformKind::Rmt => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        TransformKind::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::LogStft => "log_stft",
            TransformKind::LinearStft => "linear_stft",
            TransformKind::Rmt => "rmt",
        }
    }

    /// Whether outputs are power values (and hence non-negative).
    pub fn is_power(self) -> bool {
        !matches!(self, TransformKind::Rmt)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown transform {s:?}; expected log_stft, linear_stft or rmt"
                ))
            })
    }
}

/// Parameters of one transform. The output matrix is `frame_len × n_frames`:
/// filter-bank kinds use `frame_len` filters, and the random matrix is
/// `frame_len × frame_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub frame_len: usize,
    pub n_frames: usize,
    pub sample_rate: u32,
    /// Seed of the random matrix; zero and ignored for filter-bank kinds.
    pub rmt_seed: u64,
}

/// The filter bank a spec resolves to, with any Nyquist clamp applied.
#[derive(Debug, Clone, PartialEq)]
pub struct BankPlan {
    pub bank: FilterBank,
    /// The reduced upper center when `F_MAX` had to be pulled below Nyquist.
    pub clamped_f_max: Option<f64>,
}

impl TransformSpec {
    /// Default 204 × 204 geometry at the given rate.
    pub fn new(kind: TransformKind, sample_rate: u32) -> Self {
        TransformSpec {
            kind,
            frame_len: DEFAULT_FRAME_LEN,
            n_frames: DEFAULT_N_FRAMES,
            sample_rate,
            rmt_seed: 0,
        }
    }

    pub fn with_rmt_seed(mut self, seed: u64) -> Self {
        if self.kind == TransformKind::Rmt {
            self.rmt_seed = seed;
        }
        self
    }

    pub fn chunk_len(&self) -> usize {
        self.frame_len * self.n_frames
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.n_frames == 0 {
            return Err(Error::Configuration(format!(
                "frame_len {} / n_frames {} out of range",
                self.frame_len, self.n_frames
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Configuration("sample rate must be positive".into()));
        }
        if self.kind != TransformKind::Rmt && self.rmt_seed != 0 {
            return Err(Error::Configuration(
                "rmt_seed is only meaningful for the rmt transform".into(),
            ));
        }
        Ok(())
    }

    /// Resolves the filter bank. When `F_MAX` reaches past
    /// `NYQUIST_GUARD × Nyquist`, the bank is re-spanned from `F_MIN` up to that limit.
    pub fn bank_plan(&self) -> Result<Option<BankPlan>> {
        let build = match self.kind {
            TransformKind::LogStft => log_centers,
            TransformKind::LinearStft => linear_centers,
            TransformKind::Rmt => return Ok(None),
        };
        let limit = NYQUIST_GUARD * self.sample_rate as f64 / 2.0;
        let (f_max, clamped_f_max) = if F_MAX > limit {
            (limit, Some(limit))
        } else {
            (F_MAX, None)
        };
        let bank = build(F_MIN, f_max, self.frame_len)?;
        Ok(Some(BankPlan {
            bank,
            clamped_f_max,
        }))
    }

    /// Canonical text form, the input to [`TransformSpec::digest`].
    pub fn describe(&self) -> String {
        format!(
            "transform={} frame_len={} n_frames={} sample_rate={} rmt_seed={} f_min={} f_max={}",
            self.kind, self.frame_len, self.n_frames, self.sample_rate, self.rmt_seed, F_MIN, F_MAX
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.describe())
    }
}

/// Where a spectrogram's chunk came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: PathBuf,
    pub chunk_offset: usize,
}

/// One transformed chunk: `rows × cols` real values, row-major, rows are
/// filters or projection components and columns are time frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub label: Option<u32>,
    pub spec: TransformSpec,
    pub provenance: Option<Provenance>,
}

impl Spectrogram {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn spec_digest(&self) -> [u8; 32] {
        self.spec.digest()
    }

    /// The reduced upper filter center if the bank was clamped below Nyquist.
    pub fn clamped_f_max(&self) -> Option<f64> {
        self.spec
            .bank_plan()
            .ok()
            .flatten()
            .and_then(|p| p.clamped_f_max)
    }
}

enum Analysis {
    Bank {
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    },
    Random(RandomMatrix),
}

/// A transform with its basis tables or random matrix built once, reusable
/// across chunks and threads.
pub struct Transformer {
    spec: TransformSpec,
    plan: Option<BankPlan>,
    analysis: Analysis,
}

impl Transformer {
    pub fn new(spec: TransformSpec) -> Result<Self> {
        spec.validate()?;
        let plan = spec.bank_plan()?;
        let analysis = match &plan {
            Some(p) => {
                check_nyquist(&p.bank, spec.sample_rate as f64)?;
                if let Some(f) = p.clamped_f_max {
                    log::warn!(
                        "{}: f_max {F_MAX} Hz exceeds {NYQUIST_GUARD} x Nyquist at {} Hz; bank re-spanned to {f} Hz",
                        spec.kind,
                        spec.sample_rate
                    );
                }
                let (cos, sin) = p
                    .bank
                    .centers
                    .iter()
                    .map(|&c| basis_row(c, spec.sample_rate as f64, spec.frame_len))
                    .unzip();
                Analysis::Bank { cos, sin }
            }
            None => Analysis::Random(make_random_matrix(spec.rmt_seed, spec.frame_len)),
        };
        Ok(Transformer {
            spec,
            plan,
            analysis,
        })
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn bank_plan(&self) -> Option<&BankPlan> {
        self.plan.as_ref()
    }

    /// Transforms one chunk of exactly `frame_len × n_frames` samples.
    pub fn apply(&self, chunk: &[f32]) -> Result<Spectrogram> {
        let frames = frame_signal(chunk, self.spec.frame_len, self.spec.n_frames)?;
        let rows = self.spec.frame_len;
        let cols = self.spec.n_frames;
        let mut data = vec![0f32; rows * cols];
        let mut frame = vec![0f64; self.spec.frame_len];
        for (j, raw) in frames.iter().enumerate() {
            for (dst, &s) in frame.iter_mut().zip(raw.iter()) {
                *dst = s as f64;
            }
            let column = match &self.analysis {
                Analysis::Bank { cos, sin } => cos
                    .iter()
                    .zip(sin)
                    .map(|(c, s)| power_against(&frame, c, s))
                    .collect(),
                Analysis::Random(r) => rmt_project(&frame, r)?,
            };
            for (i, v) in column.into_iter().enumerate() {
                data[i * cols + j] = v as f32;
            }
        }
        Ok(Spectrogram {
            rows,
            cols,
            data,
            label: None,
            spec: self.spec,
            provenance: None,
        })
    }
}

/// One-shot [`Transformer::apply`].
pub fn transform_chunk(chunk: &[f32], spec: &TransformSpec) -> Result<Spectrogram> {
    Transformer::new(*spec)?.apply(chunk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn log_centers_endpoints_and_ratio() {
        let bank = log_centers(16.352, 5587.65, 204).unwrap();
        let c = bank.centers();
        assert!(rel(c[0], 16.352) < 1e-12);
        assert_eq!(c[203], 5587.65);
        // (5587.65 / 16.352)^(1/203), evaluated independently.
        let expected_ratio = (5587.65f64 / 16.352).powf(1.0 / 203.0);
        assert!((expected_ratio - 1.02916).abs() < 5e-6);
        for w in c.windows(2) {
            assert!(rel(w[1] / w[0], expected_ratio) < 1e-9);
        }
        // Close to the quarter-tone ratio.
        assert!((expected_ratio - 2f64.powf(1.0 / 24.0)).abs() < 2e-4);
    }

    #[test]
    fn small_banks() {
        let log = log_centers(100.0, 400.0, 3).unwrap();
        assert!(rel(log.centers()[1], 200.0) < 1e-12);
        assert_eq!(log.centers()[0], 100.0);
        assert_eq!(log.centers()[2], 400.0);
        let lin = linear_centers(100.0, 400.0, 3).unwrap();
        assert_eq!(lin.centers(), &[100.0, 250.0, 400.0]);
    }

    #[test]
    fn linear_spacing() {
        let bank = linear_centers(F_MIN, F_MAX, 204).unwrap();
        let c = bank.centers();
        assert_eq!(c[0], 16.35);
        assert_eq!(c[203], 5587.65);
        for w in c.windows(2) {
            assert!(rel(w[1] - w[0], 5571.3 / 203.0) < 1e-9, "{}", w[1] - w[0]);
            assert!((w[1] - w[0] - 27.445).abs() < 1e-3);
        }
    }

    #[test]
    fn bad_bank_arguments() {
        assert!(matches!(log_centers(0.0, 10.0, 5), Err(Error::Argument(_))));
        assert!(matches!(log_centers(10.0, 10.0, 5), Err(Error::Argument(_))));
        assert!(matches!(linear_centers(1.0, 10.0, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn framing() {
        let frames = frame_signal(&[1, 2, 3, 4], 2, 2).unwrap();
        assert_eq!(frames, vec![&[1, 2][..], &[3, 4][..]]);
        let chunk = vec![0f32; 41616];
        assert_eq!(frame_signal(&chunk, 204, 204).unwrap().len(), 204);
        assert!(frame_signal(&chunk, 204, 203).is_err());
        // 41616 samples span ~5.2 s at 8 kHz and ~20.8 s at 2 kHz.
        assert!((41616.0 / 8000.0 - 5.202f64).abs() < 1e-9);
        assert!((41616.0 / 2000.0 - 20.808f64).abs() < 1e-9);
    }

    #[test]
    fn zero_frame_zero_power() {
        let bank = log_centers(F_MIN, 3800.0, 204).unwrap();
        let p = filterbank_power(&[0.0; 204], &bank, 8000.0).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_at_center_has_expected_power() {
        let bank = log_centers(F_MIN, 3800.0, 204).unwrap();
        let c = bank.centers();
        let fs = 8000.0;
        for k in [120, 150, 180] {
            let frame: Vec<f64> = (0..204)
                .map(|t| (2.0 * PI * c[k] * t as f64 / fs).cos())
                .collect();
            let p = filterbank_power(&frame, &bank, fs).unwrap();
            assert!(rel(p[k], 10404.0) < 0.05, "k={k} p={}", p[k]);
            // At least three quarter-tones away: 6 dB down.
            for (j, &pj) in p.iter().enumerate() {
                if (c[j] / c[k]).log2().abs() >= 3.0 / 24.0 {
                    assert!(pj <= p[k] / 4.0, "k={k} j={j}");
                }
            }
        }
    }

    #[test]
    fn nyquist_violation_is_configuration_error() {
        let bank = log_centers(F_MIN, F_MAX, 10).unwrap();
        assert!(matches!(
            filterbank_power(&[1.0; 8], &bank, 2000.0),
            Err(Error::Configuration(_))
        ));
    }

    /// Row whose total energy is largest for a constant tone at `freq`.
    fn loudest_row(t: &Transformer, freq: f64, phase: f64) -> usize {
        let fs = t.spec().sample_rate as f64;
        let chunk: Vec<f32> = (0..t.spec().chunk_len())
            .map(|n| (0.5 * (2.0 * PI * freq * n as f64 / fs + phase).cos()) as f32)
            .collect();
        let s = t.apply(&chunk).unwrap();
        (0..s.rows)
            .max_by(|&a, &b| {
                let ea: f64 = s.row(a).iter().map(|&v| v as f64).sum();
                let eb: f64 = s.row(b).iter().map(|&v| v as f64).sum();
                ea.total_cmp(&eb)
            })
            .unwrap()
    }

    #[test]
    fn tones_localize_above_one_cycle_per_frame() {
        let t = Transformer::new(TransformSpec::new(TransformKind::LogStft, 8000)).unwrap();
        let centers = t.bank_plan().unwrap().bank.centers().to_vec();
        let floor = 8000.0 / 204.0;
        for (k, &c) in centers.iter().enumerate().filter(|(_, &c)| c >= floor).step_by(7) {
            assert_eq!(loudest_row(&t, c, 0.3), k, "center {c} Hz");
        }
        // Below one cycle per frame the rows blur together and some tones
        // peak in a neighbouring row.
        let blurred = (0..centers.len())
            .filter(|&k| centers[k] < floor)
            .any(|k| (0..8).any(|p| loudest_row(&t, centers[k], p as f64 * PI / 4.0) != k));
        assert!(blurred);
    }

    #[test]
    fn two_khz_spec_is_clamped() {
        let plan = TransformSpec::new(TransformKind::LogStft, 2000)
            .bank_plan()
            .unwrap()
            .unwrap();
        assert_eq!(plan.clamped_f_max, Some(950.0));
        assert_eq!(*plan.bank.centers().last().unwrap(), 950.0);
        let plan = TransformSpec::new(TransformKind::LogStft, 16000)
            .bank_plan()
            .unwrap()
            .unwrap();
        assert_eq!(plan.clamped_f_max, None);
        // 5587.65 Hz is above 0.95 x 4000 Hz, so 8 kHz clamps too.
        let plan = TransformSpec::new(TransformKind::LinearStft, 8000)
            .bank_plan()
            .unwrap()
            .unwrap();
        assert_eq!(plan.clamped_f_max, Some(3800.0));
    }

    #[test]
    fn random_matrix_determinism_and_moments() {
        let a = make_random_matrix(7, 204);
        let b = make_random_matrix(7, 204);
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = make_random_matrix(8, 204);
        let differ = a
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differ as f64 > 0.99 * 41616.0);
        let n = a.as_slice().len() as f64;
        let mean = a.as_slice().iter().sum::<f64>() / n;
        let var = a.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn rmt_small_cases() {
        let id = RandomMatrix::from_rows(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(rmt_project(&[0.3, -0.7], &id).unwrap(), vec![0.3, -0.7]);
        let r = RandomMatrix::from_rows(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(rmt_project(&[1.0, 1.0], &r).unwrap(), vec![3.0, 7.0]);
        assert_eq!(rmt_project(&[0.0, 0.0], &r).unwrap(), vec![0.0, 0.0]);
        assert!(rmt_project(&[1.0], &r).is_err());
    }

    #[test]
    fn silent_chunk_and_dims() {
        let spec = TransformSpec::new(TransformKind::LogStft, 8000);
        let s = transform_chunk(&vec![0.0; 41616], &spec).unwrap();
        assert_eq!((s.rows, s.cols), (204, 204));
        assert!(s.data.iter().all(|&v| v == 0.0));
        let rmt = TransformSpec::new(TransformKind::Rmt, 8000).with_rmt_seed(3);
        let chunk: Vec<f32> = (0..41616).map(|i| ((i * 37 % 101) as f32 - 50.0) / 60.0).collect();
        let s = transform_chunk(&chunk, &rmt).unwrap();
        assert_eq!((s.rows, s.cols), (204, 204));
        assert!(s.data.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn transformer_matches_direct_filterbank_power() {
        let spec = TransformSpec::new(TransformKind::LinearStft, 8000);
        let t = Transformer::new(spec).unwrap();
        let chunk: Vec<f32> = (0..41616).map(|i| ((i as f32) * 0.013).sin() * 0.5).collect();
        let s = t.apply(&chunk).unwrap();
        let bank = &t.bank_plan().unwrap().bank;
        let frame: Vec<f64> = chunk[204 * 7..204 * 8].iter().map(|&v| v as f64).collect();
        let p = filterbank_power(&frame, bank, 8000.0).unwrap();
        for (i, v) in p.iter().enumerate() {
            assert_eq!(s.at(i, 7), *v as f32);
        }
    }

    #[test]
    fn spec_digest_tracks_fields() {
        let a = TransformSpec::new(TransformKind::Rmt, 8000).with_rmt_seed(1);
        let b = TransformSpec::new(TransformKind::Rmt, 8000).with_rmt_seed(2);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.digest());
        assert!(TransformSpec::new(TransformKind::LogStft, 8000)
            .with_rmt_seed(9)
            .rmt_seed
            == 0);
    }

    #[test]
    fn dft_bin_centers_match_direct_dft() {
        let (n, fs) = (204usize, 8000.0);
        let centers: Vec<f64> = (1..n / 2).map(|m| m as f64 * fs / n as f64).collect();
        let bank = FilterBank::from_centers(centers, FilterKind::Linear).unwrap();
        let frame: Vec<f64> = (0..n).map(|t| ((t * 37 % 101) as f64 / 50.0 - 1.0) * 0.7).collect();
        let p = filterbank_power(&frame, &bank, fs).unwrap();
        for (i, &v) in p.iter().enumerate() {
            let m = i + 1;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let a = 2.0 * PI * ((m * t) % n) as f64 / n as f64;
                re += x * a.cos();
                im -= x * a.sin();
            }
            let want = re * re + im * im;
            assert!(rel(v, want) < 1e-9, "bin {m}: {v} vs {want}");
        }
    }

    fn frame_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 32)
    }

    proptest! {
        #[test]
        fn rmt_is_linear(x in frame_strategy(), y in frame_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
            let r = make_random_matrix(seed, 32);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = rmt_project(&mix, &r).unwrap();
            let px = rmt_project(&x, &r).unwrap();
            let py = rmt_project(&y, &r).unwrap();
            let scale = px.iter().chain(&py).fold(1.0f64, |m, v| m.max(v.abs())) * (a.abs() + b.abs()).max(1.0);
            for i in 0..32 {
                prop_assert!((lhs[i] - (a * px[i] + b * py[i])).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn power_scales_quadratically(x in frame_strategy(), c in -10.0f64..10.0) {
            let bank = log_centers(50.0, 3000.0, 16).unwrap();
            let base = filterbank_power(&x, &bank, 8000.0).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let out = filterbank_power(&scaled, &bank, 8000.0).unwrap();
            for (p, q) in base.iter().zip(&out) {
                prop_assert!(*q >= 0.0);
                prop_assert!((q - c * c * p).abs() <= 1e-9 * (c * c * p).abs().max(1e-12));
            }
        }

        #[test]
        fn log_centers_are_geometric(f_min in 1.0f64..100.0, factor in 1.5f64..500.0, count in 2usize..300) {
            let bank = log_centers(f_min, f_min * factor, count).unwrap();
            let c = bank.centers();
            let step = (c[count - 1] / c[0]).ln() / (count - 1) as f64;
            for (k, v) in c.iter().enumerate() {
                let affine = c[0].ln() + step * k as f64;
                prop_assert!(((v.ln() - affine) / affine.abs().max(1.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shifting_chunk_by_a_frame_shifts_columns() {
        for kind in TransformKind::ALL {
            let spec = TransformSpec {
                kind,
                frame_len: 16,
                n_frames: 8,
                sample_rate: 8000,
                rmt_seed: if kind == TransformKind::Rmt { 5 } else { 0 },
            };
            let signal: Vec<f32> = (0..16 * 9).map(|i| ((i * 7919) % 113) as f32 / 113.0 - 0.5).collect();
            let t = Transformer::new(spec).unwrap();
            let a = t.apply(&signal[..128]).unwrap();
            let b = t.apply(&signal[16..144]).unwrap();
            for r in 0..16 {
                for c in 0..7 {
                    assert_eq!(a.at(r, c + 1), b.at(r, c));
                }
            }
        }
    }
}
