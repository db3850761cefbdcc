//! Waveform and log-Mel feature transforms.
//!
//! Analysis parameters are fixed across the pipeline: 1024-point STFT with a
//! periodic Hann window and hop 256 at 22.05 kHz, projected onto an
//! 80-band triangular filterbank spanning 0-8 kHz, then compressed with
//! `ln(max(x, 1e-5))`.

mod griffin_lim;
mod mel;
mod stft;

pub use griffin_lim::griffin_lim_invert;
pub use mel::{
    log_compress, mel_project, vad_mask, MelFilterbank, MelSpectrogram, FMAX_HZ, FMIN_HZ,
    LOG_FLOOR, N_MELS,
};
pub use stft::{istft, stft_complex, stft_magnitudes, ANALYSIS_RATE_HZ, HOP, N_FFT};

use crate::error::{Error, Result};

/// Mono audio at a known sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate_hz: u32,
}

impl Waveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Band-limited sinc resampling.
///
/// Duration is preserved to within one sample period; resampling to the
/// source rate is an identity.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    if target_hz == 0 {
        return Err(Error::InvalidArgument("resample target must be positive".into()));
    }
    if target_hz == w.rate_hz {
        return Ok(w.clone());
    }
    let src = w.rate_hz as f64;
    let dst = target_hz as f64;
    let out_len = ((w.samples.len() as u64 * target_hz as u64 + w.rate_hz as u64 / 2)
        / w.rate_hz as u64) as usize;

    let ratio = dst / src;
    let fc = 0.5 * ratio.min(1.0); // cycles per input sample
    let half_width = (32.0 * (1.0 / ratio).max(1.0)).ceil();
    let x = &w.samples;
    let n = x.len() as isize;

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let t = j as f64 * src / dst;
        let k_lo = (t - half_width).ceil() as isize;
        let k_hi = (t + half_width).floor() as isize;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in k_lo..=k_hi {
            let u = t - k as f64;
            let sinc = if u == 0.0 {
                1.0
            } else {
                (2.0 * std::f64::consts::PI * fc * u).sin() / (2.0 * std::f64::consts::PI * fc * u)
            };
            let win = 0.5 * (1.0 + (std::f64::consts::PI * u / half_width).cos());
            let kern = 2.0 * fc * sinc * win;
            norm += kern;
            if k >= 0 && k < n {
                acc += x[k as usize] * kern;
            }
        }
        out.push(if norm != 0.0 { acc / norm } else { 0.0 });
    }
    Ok(Waveform { samples: out, rate_hz: target_hz })
}

/// Spectral-gating noise reduction: subtract each bin's 10th-percentile
/// magnitude profile and floor at zero, keeping the original phase.
pub fn spectral_gate(w: &Waveform) -> Result<Waveform> {
    let spec = stft_complex(&w.samples)?;
    let t = spec.len();
    let bins = spec[0].len();
    let mut profile = vec![0.0f64; bins];
    let mut col = vec![0.0f64; t];
    for (b, p) in profile.iter_mut().enumerate() {
        for (i, frame) in spec.iter().enumerate() {
            col[i] = frame[b].norm();
        }
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        *p = col[(t - 1) / 10];
    }
    let gated: Vec<Vec<rustfft::num_complex::Complex<f64>>> = spec
        .iter()
        .map(|frame| {
            frame
                .iter()
                .zip(&profile)
                .map(|(c, &p)| {
                    let mag = (c.norm() - p).max(0.0);
                    if c.norm() > 0.0 {
                        c * (mag / c.norm())
                    } else {
                        *c
                    }
                })
                .collect()
        })
        .collect();
    let samples = istft(&gated, Some(w.samples.len()));
    Ok(Waveform { samples, rate_hz: w.rate_hz })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, secs: f64) -> Waveform {
        let n = (rate as f64 * secs) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate_hz: rate,
        }
    }

    fn dominant_freq(w: &Waveform) -> f64 {
        // Coarse DFT peak over a 1 Hz grid.
        let mut best = (0.0, 0.0);
        let n = w.samples.len() as f64;
        let mut f = 10.0;
        while f < w.rate_hz as f64 / 2.0 {
            let (mut c, mut s) = (0.0, 0.0);
            for (i, &v) in w.samples.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / w.rate_hz as f64;
                c += v * ph.cos();
                s += v * ph.sin();
            }
            let mag = (c * c + s * s).sqrt() / n;
            if mag > best.1 {
                best = (f, mag);
            }
            f += 1.0;
        }
        best.0
    }

    #[test]
    fn resample_preserves_duration() {
        let w = tone(440.0, 44100, 1.0);
        let out = resample(&w, 22050).unwrap();
        assert!((out.samples.len() as i64 - 22050).unsigned_abs() <= 1);
        assert_eq!(out.rate_hz, 22050);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let w = tone(440.0, 22050, 0.25);
        let out = resample(&w, 22050).unwrap();
        for (a, b) in w.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_keeps_tone_frequency() {
        let w = tone(1000.0, 44100, 0.5);
        let out = resample(&w, 22050).unwrap();
        let f = dominant_freq(&out);
        assert!((f - 1000.0).abs() <= 2.0, "peak at {f} Hz");
    }

    #[test]
    fn resample_rejects_zero_target() {
        let w = tone(440.0, 44100, 0.1);
        assert!(resample(&w, 0).is_err());
    }

    #[test]
    fn spectral_gate_improves_snr_of_noisy_burst() {
        // The gate learns the stationary noise profile from quiet stretches,
        // so the probe is a tone burst surrounded by silence.
        use rand::{Rng, SeedableRng};
        let rate = 22050usize;
        let mut clean = vec![0.0f64; rate / 2];
        clean.extend(tone(880.0, rate as u32, 0.25).samples);
        clean.extend(std::iter::repeat_n(0.0, rate / 2));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let noisy = Waveform {
            samples: clean.iter().map(|v| v + 0.02 * (rng.random::<f64>() - 0.5)).collect(),
            rate_hz: rate as u32,
        };
        let gated = spectral_gate(&noisy).unwrap();
        let err = |s: &[f64]| {
            s.iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        assert!(err(&gated.samples) < err(&noisy.samples));
    }
}
