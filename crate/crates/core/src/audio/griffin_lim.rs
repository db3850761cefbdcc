//! Iterative phase reconstruction from log-Mel spectrograms.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use super::mel::{MelFilterbank, MelSpectrogram};
use super::stft::{istft, stft_complex, ANALYSIS_RATE_HZ, HOP, N_BINS};
use super::Waveform;
use crate::error::{Error, Result};

const NNLS_ITERS: usize = 40;

/// Reconstruct a 22.05 kHz waveform from a log-Mel spectrogram.
///
/// The Mel frame is lifted back to a full magnitude spectrum by
/// non-negative least squares, then Griffin-Lim iterations refine a
/// seeded random initial phase. Deterministic given `seed`.
pub fn griffin_lim_invert(mel: &MelSpectrogram, iters: usize, seed: u64) -> Result<Waveform> {
    if iters < 1 {
        return Err(Error::InvalidArgument("griffin_lim needs at least 1 iteration".into()));
    }
    let fb = MelFilterbank::shared();
    let frames = mel.frames();
    if frames == 0 {
        return Err(Error::EmptyInput("griffin_lim input"));
    }

    let amp = mel.values.mapv(f64::exp);
    let mut mag = Array2::<f64>::zeros((frames, N_BINS));
    for (t, row) in amp.rows().into_iter().enumerate() {
        let s = fb.invert_frame(&row.to_owned(), NNLS_ITERS);
        mag.row_mut(t).assign(&s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec: Vec<Vec<Complex<f64>>> = (0..frames)
        .map(|t| {
            (0..N_BINS)
                .map(|k| {
                    let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                    Complex::from_polar(mag[[t, k]], phase)
                })
                .collect()
        })
        .collect();

    let target_len = (frames - 1) * HOP;
    for _ in 0..iters {
        let x = istft(&spec, Some(target_len));
        let re = stft_complex(&x)?;
        for (t, frame) in spec.iter_mut().enumerate() {
            let src = re.get(t.min(re.len() - 1)).unwrap();
            for (k, c) in frame.iter_mut().enumerate() {
                let phase = if src[k].norm() > 0.0 { src[k].arg() } else { 0.0 };
                *c = Complex::from_polar(mag[[t, k]], phase);
            }
        }
    }
    let mut samples = istft(&spec, Some(target_len));
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.999 {
        let scale = 0.999 / peak;
        for v in &mut samples {
            *v *= scale;
        }
    }
    Ok(Waveform { samples, rate_hz: ANALYSIS_RATE_HZ })
}
