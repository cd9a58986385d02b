use std::f64::consts::PI;

use waverep::audio::{resample, AudioBuffer};

fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> AudioBuffer {
    let n = (rate as f64 * secs) as usize;
    let s = (0..n)
        .map(|t| (amp * (2.0 * PI * freq * t as f64 / rate as f64).sin()) as f32)
        .collect();
    AudioBuffer::mono(s, rate).unwrap()
}

/// Least-squares amplitude of a sinusoid at `freq` over `x`.
fn amplitude_at(x: &[f32], freq: f64, rate: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (t, &v) in x.iter().enumerate() {
        let w = 2.0 * PI * freq * t as f64 / rate;
        c += v as f64 * w.cos();
        s += v as f64 * w.sin();
    }
    2.0 * (c * c + s * s).sqrt() / x.len() as f64
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn interior(x: &[f32], rate: u32) -> &[f32] {
    let edge = rate as usize / 10;
    &x[edge..x.len() - edge]
}

#[test]
fn passband_tone_keeps_frequency_and_amplitude() {
    for (from, to) in [(44_100, 8_000), (48_000, 8_000), (22_050, 2_000), (16_000, 8_000)] {
        let out = resample(&tone(440.0, from, 2.0, 0.5), to).unwrap();
        let mid = interior(out.samples(), to);
        // A scan over 400–480 Hz in 0.25 Hz steps finds the peak.
        let peak = (0..=320)
            .map(|i| 400.0 + 0.25 * i as f64)
            .max_by(|a, b| {
                amplitude_at(mid, *a, to as f64)
                    .partial_cmp(&amplitude_at(mid, *b, to as f64))
                    .unwrap()
            })
            .unwrap();
        assert!((peak - 440.0).abs() / 440.0 < 0.01, "{from}->{to}: peak {peak}");
        let amp = amplitude_at(mid, 440.0, to as f64);
        assert!((amp - 0.5).abs() / 0.5 < 0.01, "{from}->{to}: amplitude {amp}");
    }
}

#[test]
fn tone_above_target_nyquist_is_removed() {
    let input = tone(5000.0, 44_100, 2.0, 0.5);
    let out = resample(&input, 8_000).unwrap();
    let ratio = rms(interior(out.samples(), 8_000)) / rms(input.samples());
    assert!(ratio < 0.01, "residual {ratio}");

    let out = resample(&tone(1500.0, 44_100, 2.0, 0.5), 2_000).unwrap();
    assert!(rms(interior(out.samples(), 2_000)) / (0.5 / 2f64.sqrt()) < 0.01);
}

#[test]
fn duration_is_preserved() {
    for (from, to, secs) in [(44_100, 8_000, 3.3), (48_000, 2_000, 1.01), (11_025, 8_000, 0.5)] {
        let input = tone(100.0, from, secs, 0.1);
        let out = resample(&input, to).unwrap();
        assert_eq!(out.frames(), input.frames() * to as usize / from as usize);
        assert!((out.duration_secs() - input.duration_secs()).abs() <= 1.0 / to as f64);
        assert_eq!(out.sample_rate(), to);
    }
}
