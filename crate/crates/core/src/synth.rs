//! Deterministic synthetic corpora: a handful of musical "styles" that differ
//! in register, tempo, timbre and articulation, rendered as WAV tracks laid
//! out one directory per class.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{encode_wav_pcm16, AudioBuffer};
use crate::error::{Error, Result};

/// Recipe for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Style {
    pub name: &'static str,
    /// MIDI note range, inclusive.
    pub register: (u8, u8),
    /// Scale degrees in semitones above the register floor.
    pub scale: &'static [u8],
    pub note_secs: f64,
    /// Partial frequency ratios and amplitudes.
    pub partials: &'static [(f64, f64)],
    /// Exponential decay rate in 1/s; zero sustains.
    pub decay: f64,
    /// Notes sounding together.
    pub voices: usize,
}

pub const STYLES: [Style; 5] = [
    Style {
        name: "bass_pulse",
        register: (33, 48),
        scale: &[0, 3, 5, 7, 10],
        note_secs: 0.5,
        partials: &[(1.0, 1.0), (2.0, 0.5), (3.0, 0.3), (4.0, 0.2)],
        decay: 6.0,
        voices: 1,
    },
    Style {
        name: "bell_tolls",
        register: (76, 93),
        scale: &[0, 2, 4, 7, 9],
        note_secs: 0.8,
        partials: &[(1.0, 1.0), (2.76, 0.6), (5.4, 0.3)],
        decay: 3.0,
        voices: 1,
    },
    Style {
        name: "flute_line",
        register: (67, 86),
        scale: &[0, 2, 4, 5, 7, 9, 11],
        note_secs: 0.25,
        partials: &[(1.0, 1.0), (2.0, 0.1)],
        decay: 0.0,
        voices: 1,
    },
    Style {
        name: "organ_chords",
        register: (50, 66),
        scale: &[0, 2, 3, 5, 7, 8, 10],
        note_secs: 1.0,
        partials: &[(1.0, 1.0), (2.0, 0.6), (3.0, 0.4), (4.0, 0.3), (5.0, 0.2), (6.0, 0.1)],
        decay: 0.0,
        voices: 3,
    },
    Style {
        name: "pluck_arpeggio",
        register: (57, 79),
        scale: &[0, 4, 7, 12],
        note_secs: 0.125,
        partials: &[(1.0, 1.0), (2.0, 0.7), (3.0, 0.5), (4.0, 0.3)],
        decay: 12.0,
        voices: 1,
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Leading entries of [`STYLES`] to render.
    pub n_classes: usize,
    pub tracks_per_class: usize,
    pub track_secs: f64,
    pub sample_rate: u32,
    pub channels: u16,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: STYLES.len(),
            tracks_per_class: 10,
            track_secs: 30.0,
            sample_rate: 16_000,
            channels: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_classes > STYLES.len() {
            return Err(Error::Argument(format!("n_classes must be in 1..={}", STYLES.len())));
        }
        if self.tracks_per_class == 0 || !(self.track_secs > 0.0) || self.sample_rate == 0 {
            return Err(Error::Argument("tracks, duration and sample rate must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::Argument("channel count must be positive".into()));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        STYLES[..self.n_classes.min(STYLES.len())]
            .iter()
            .map(|s| s.name.to_string())
            .collect()
    }
}

fn midi_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

fn track_rng(seed: u64, class: usize, track: usize) -> ChaCha8Rng {
    let mut s = ChaCha8Rng::seed_from_u64(seed);
    let base: u64 = s.random();
    ChaCha8Rng::seed_from_u64(base ^ ((class as u64) << 32) ^ track as u64)
}

/// Renders one track of `style`. Tempo, key, loudness and note choices vary
/// per track; the result peaks below full scale.
pub fn render_track(style: &Style, cfg: &SynthConfig, class: usize, track: usize) -> Result<AudioBuffer> {
    cfg.validate()?;
    let mut rng = track_rng(cfg.seed, class, track);
    let fs = cfg.sample_rate as f64;
    let n = (cfg.track_secs * fs).round() as usize;
    let note_len = style.note_secs * rng.random_range(0.9..1.1);
    let transpose = rng.random_range(-2i32..=2) as f64;
    let gain = rng.random_range(0.3..0.6);
    let nyquist_guard = 0.45 * fs;

    let mut out = vec![0f64; n];
    let step = (note_len * fs).round().max(1.0) as usize;
    let attack = (0.005 * fs) as usize + 1;
    let release = (0.01 * fs) as usize + 1;
    let (lo, hi) = style.register;
    for start in (0..n).step_by(step) {
        let len = step.min(n - start);
        for _ in 0..style.voices {
            let degree = style.scale[rng.random_range(0..style.scale.len())] as f64;
            let octaves = ((hi - lo) as f64 / 12.0).floor().max(0.0) as i32;
            let octave = rng.random_range(0..=octaves) as f64;
            let note = (lo as f64 + degree + 12.0 * octave + transpose).min(hi as f64 + 2.0);
            let f0 = midi_hz(note);
            let phase0 = rng.random_range(0.0..2.0 * PI);
            for &(ratio, amp) in style.partials {
                let f = f0 * ratio;
                if f >= nyquist_guard {
                    continue;
                }
                let w = 2.0 * PI * f / fs;
                for t in 0..len {
                    let env_a = ((t + 1) as f64 / attack as f64).min(1.0);
                    let env_r = ((len - t) as f64 / release as f64).min(1.0);
                    let env_d = (-style.decay * t as f64 / fs).exp();
                    out[start + t] += amp * env_a * env_r * env_d * (w * t as f64 + phase0 * ratio).sin();
                }
            }
        }
    }
    for v in &mut out {
        *v += 1e-3 * rng.random_range(-1.0..1.0);
    }
    let peak = out.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-9);
    let scale = gain / peak;

    let channels = cfg.channels as usize;
    let mut interleaved = Vec::with_capacity(n * channels);
    for &v in &out {
        for c in 0..channels {
            // Slight per-channel level difference so downmixing is exercised.
            let tilt = 1.0 - 0.1 * c as f64 / channels as f64;
            interleaved.push((v * scale * tilt) as f32);
        }
    }
    AudioBuffer::from_interleaved(interleaved, cfg.sample_rate, cfg.channels)
}

/// Writes `dir/<class>/track_NN.wav` for every class and track, returning
/// the paths in class then track order.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut paths = Vec::new();
    for (class, style) in STYLES[..cfg.n_classes].iter().enumerate() {
        let class_dir = dir.join(style.name);
        std::fs::create_dir_all(&class_dir).map_err(|e| Error::io_at(&class_dir, e))?;
        for track in 0..cfg.tracks_per_class {
            let buf = render_track(style, cfg, class, track)?;
            let path = class_dir.join(format!("track_{track:02}.wav"));
            std::fs::write(&path, encode_wav_pcm16(&buf)).map_err(|e| Error::io_at(&path, e))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
