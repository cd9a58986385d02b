//! PCM audio: WAV decoding, channel averaging and anti-aliased downsampling.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Decoded PCM audio, interleaved, normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
    channels: u16,
}

impl AudioBuffer {
    /// Builds a buffer from interleaved samples, checking the invariants.
    pub fn from_interleaved(samples: Vec<f32>, sample_rate: u32, channels: u16) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if channels == 0 {
            return Err(Error::Argument("channel count must be positive".into()));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(Error::Argument(format!(
                "{} samples do not divide into {} channels",
                samples.len(),
                channels
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Argument(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
            channels,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::from_interleaved(samples, sample_rate, 1)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }
}

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleEncoding {
    Int16,
    Int24,
    Float32,
}

impl SampleEncoding {
    fn bytes(self) -> usize {
        match self {
            SampleEncoding::Int16 => 2,
            SampleEncoding::Int24 => 3,
            SampleEncoding::Float32 => 4,
        }
    }
}

struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    encoding: SampleEncoding,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Format(format!("fmt chunk is {} bytes, need 16", body.len())));
    }
    let mut tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);

    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
        if body.len() < 40 {
            return Err(Error::Format("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk".into()));
        }
        tag = read_u16(body, 24);
    }
    if channels == 0 {
        return Err(Error::Format("fmt chunk declares zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Format("fmt chunk declares zero sample rate".into()));
    }

    let encoding = match (tag, bits) {
        (WAVE_FORMAT_PCM, 16) => SampleEncoding::Int16,
        (WAVE_FORMAT_PCM, 24) => SampleEncoding::Int24,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => SampleEncoding::Float32,
        (WAVE_FORMAT_PCM, b) => {
            return Err(Error::UnsupportedFormat(format!("{b}-bit integer PCM")))
        }
        (WAVE_FORMAT_IEEE_FLOAT, b) => {
            return Err(Error::UnsupportedFormat(format!("{b}-bit float PCM")))
        }
        (t, _) => return Err(Error::UnsupportedFormat(format!("codec tag {t:#06x}"))),
    };
    if block_align as usize != encoding.bytes() * channels as usize {
        return Err(Error::Format(format!(
            "block align {block_align} inconsistent with {channels} channels of {bits}-bit samples"
        )));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        encoding,
    })
}

/// Decodes a little-endian RIFF/WAVE byte stream holding 16/24-bit integer or
/// 32-bit float PCM.
///
/// Integer samples are divided by 2^(bits-1). Float samples are clamped to
/// [-1, 1]; non-finite float samples are rejected.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                let end = body_start
                    .checked_add(size)
                    .filter(|&e| e <= bytes.len())
                    .ok_or_else(|| Error::Format("fmt chunk runs past end of file".into()))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::Format("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body_start;
                if size > available {
                    return Err(Error::Format(format!(
                        "data chunk declares {size} bytes but only {available} are present"
                    )));
                }
                return decode_samples(&bytes[body_start..body_start + size], &fmt);
            }
            _ => {}
        }
        // Chunks are padded to even length.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    Err(Error::Format(if fmt.is_some() {
        "no data chunk".into()
    } else {
        "no fmt chunk".into()
    }))
}

fn decode_samples(data: &[u8], fmt: &FmtChunk) -> Result<AudioBuffer> {
    let width = fmt.encoding.bytes();
    let frame = width * fmt.channels as usize;
    if !data.len().is_multiple_of(frame) {
        return Err(Error::Format(format!(
            "data length {} is not a whole number of {}-byte frames",
            data.len(),
            frame
        )));
    }
    let samples: Vec<f32> = match fmt.encoding {
        SampleEncoding::Int16 => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        SampleEncoding::Int24 => data
            .chunks_exact(3)
            .map(|c| {
                // Sign-extend by placing the 24 bits in the top of an i32.
                let v = i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8;
                v as f32 / 8_388_608.0
            })
            .collect(),
        SampleEncoding::Float32 => {
            let mut out = Vec::with_capacity(data.len() / 4);
            for c in data.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if !v.is_finite() {
                    return Err(Error::Format(format!("non-finite float sample {v}")));
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            out
        }
    };
    Ok(AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
        channels: fmt.channels,
    })
}

/// Encodes a buffer as 16-bit PCM WAV. Samples are scaled by 32768 and
/// rounded, so decoding a 16-bit file and re-encoding it is lossless.
pub fn encode_wav_pcm16(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&buf.channels.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    let block_align = 2 * buf.channels;
    out.extend_from_slice(&(buf.sample_rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Averages all channels into one.
pub fn to_mono(buf: &AudioBuffer) -> AudioBuffer {
    if buf.channels == 1 {
        return buf.clone();
    }
    let ch = buf.channels as usize;
    let samples = buf
        .samples
        .chunks_exact(ch)
        .map(|frame| (frame.iter().map(|&s| s as f64).sum::<f64>() / ch as f64) as f32)
        .collect();
    AudioBuffer {
        samples,
        sample_rate: buf.sample_rate,
        channels: 1,
    }
}

/// Kaiser window shape parameter of the resampling kernel.
pub const KAISER_BETA: f64 = 8.6;
/// Kernel length in output-rate samples.
pub const TAPS_PER_PHASE: usize = 64;
/// Low-pass cutoff as a fraction of the target sample rate.
pub const CUTOFF_FRACTION: f64 = 0.45;

/// Phase tables beyond this count are computed on the fly instead of cached.
const MAX_CACHED_PHASES: u64 = 4096;

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Windowed-sinc polyphase downsampler.
///
/// Output sample `n` sits at input position `n * from / to`; its kernel spans
/// `TAPS_PER_PHASE` output periods, a sinc with cutoff `CUTOFF_FRACTION * to`
/// under a Kaiser window, normalized to unit DC gain.
struct Resampler {
    /// Output rate step in reduced units: positions are (n * down) / up.
    up: u64,
    down: u64,
    half_span: usize,
    /// Half kernel width in input samples.
    half_width: f64,
    /// Normalized cutoff in cycles per input sample.
    cutoff: f64,
    norm_beta: f64,
    phases: Option<Vec<Vec<f64>>>,
}

impl Resampler {
    fn new(from: u32, to: u32) -> Self {
        let g = gcd(from as u64, to as u64);
        let up = to as u64 / g;
        let down = from as u64 / g;
        let ratio = from as f64 / to as f64;
        let half_width = TAPS_PER_PHASE as f64 / 2.0 * ratio;
        let mut r = Resampler {
            up,
            down,
            half_span: half_width.ceil() as usize,
            half_width,
            cutoff: CUTOFF_FRACTION / ratio,
            norm_beta: bessel_i0(KAISER_BETA),
            phases: None,
        };
        if up <= MAX_CACHED_PHASES {
            r.phases = Some((0..up).map(|p| r.weights(p)).collect());
        }
        r
    }

    /// Kernel weights for input offsets `-half_span + 1 ..= half_span` around
    /// the integer part of the output position, for fractional phase `p/up`.
    fn weights(&self, phase: u64) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let span = 2 * self.half_span;
        let mut w = Vec::with_capacity(span);
        for k in 0..span {
            let x = (k as f64 - self.half_span as f64 + 1.0) - frac;
            let r = x / self.half_width;
            let v = if r.abs() >= 1.0 {
                0.0
            } else {
                let arg = 2.0 * self.cutoff * x;
                let sinc = if arg == 0.0 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.norm_beta;
                sinc * window
            };
            w.push(v);
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }

    fn run(&self, input: &[f32], out_len: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(out_len);
        let mut scratch;
        for n in 0..out_len as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let w: &[f64] = match &self.phases {
                Some(tables) => &tables[phase as usize],
                None => {
                    scratch = self.weights(phase);
                    &scratch
                }
            };
            let first = base - self.half_span as i64 + 1;
            let mut acc = 0.0f64;
            for (k, &wk) in w.iter().enumerate() {
                let i = first + k as i64;
                if i >= 0 && (i as usize) < input.len() {
                    acc += wk * input[i as usize] as f64;
                }
            }
            out.push(acc.clamp(-1.0, 1.0) as f32);
        }
        out
    }
}

/// Downsamples a mono buffer to `target_rate` with an anti-aliasing low-pass.
///
/// The output holds `floor(len * target_rate / sample_rate)` samples. Equal
/// rates return the input unchanged.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if buf.channels != 1 {
        return Err(Error::Precondition(format!(
            "resample expects mono input, got {} channels",
            buf.channels
        )));
    }
    if target_rate == 0 {
        return Err(Error::Argument("target rate must be positive".into()));
    }
    if target_rate > buf.sample_rate {
        return Err(Error::UnsupportedUpsample {
            from: buf.sample_rate,
            to: target_rate,
        });
    }
    if target_rate == buf.sample_rate {
        return Ok(buf.clone());
    }
    let out_len =
        (buf.samples.len() as u128 * target_rate as u128 / buf.sample_rate as u128) as usize;
    let samples = Resampler::new(buf.sample_rate, target_rate).run(&buf.samples, out_len);
    Ok(AudioBuffer {
        samples,
        sample_rate: target_rate,
        channels: 1,
    })
}
