//! Short-time Fourier transform and its inverse.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const N_BINS: usize = N_FFT / 2 + 1;

/// The analysis sampling rate every spectrogram in the pipeline uses.
pub const ANALYSIS_RATE_HZ: u32 = 22050;

fn hann_periodic() -> Vec<f64> {
    (0..N_FFT)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / N_FFT as f64).cos()))
        .collect()
}

fn reflect_index(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

fn center_pad(x: &[f64]) -> Vec<f64> {
    let pad = N_FFT / 2;
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        out.push(x[reflect_index(pad as isize - i as isize, n)]);
    }
    out.extend_from_slice(x);
    for i in 0..pad {
        out.push(x[reflect_index(n as isize + i as isize, n)]);
    }
    out
}

/// Complex STFT frames, `floor(len/hop) + 1` of them, 513 bins each.
pub fn stft_complex(x: &[f64]) -> Result<Vec<Vec<Complex<f64>>>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("stft input"));
    }
    let window = hann_periodic();
    let padded = center_pad(x);
    let frames = x.len() / HOP + 1;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let start = t * HOP;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..N_BINS].to_vec());
    }
    Ok(out)
}

/// Magnitude STFT of a 22.05 kHz waveform, `T x 513`.
pub fn stft_magnitudes(w: &Waveform) -> Result<ndarray::Array2<f64>> {
    if w.rate_hz != ANALYSIS_RATE_HZ {
        return Err(Error::InvalidArgument(format!(
            "stft expects {ANALYSIS_RATE_HZ} Hz input, got {}",
            w.rate_hz
        )));
    }
    let spec = stft_complex(&w.samples)?;
    let t = spec.len();
    let mut out = ndarray::Array2::zeros((t, N_BINS));
    for (i, frame) in spec.iter().enumerate() {
        for (j, c) in frame.iter().enumerate() {
            out[[i, j]] = c.norm();
        }
    }
    Ok(out)
}

/// Inverse STFT by windowed overlap-add with squared-window normalization.
///
/// `length` trims to the original sample count; without it the natural
/// `(T-1) * hop` length is returned.
pub fn istft(spec: &[Vec<Complex<f64>>], length: Option<usize>) -> Vec<f64> {
    let frames = spec.len();
    if frames == 0 {
        return Vec::new();
    }
    let window = hann_periodic();
    let padded_len = (frames - 1) * HOP + N_FFT;
    let mut acc = vec![0.0f64; padded_len];
    let mut wsum = vec![0.0f64; padded_len];

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    for (t, frame) in spec.iter().enumerate() {
        buf[..N_BINS].copy_from_slice(frame);
        for k in N_BINS..N_FFT {
            buf[k] = frame[N_FFT - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * HOP;
        for i in 0..N_FFT {
            let v = buf[i].re / N_FFT as f64;
            acc[start + i] += v * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    for (a, &w) in acc.iter_mut().zip(wsum.iter()) {
        if w > 1e-10 {
            *a /= w;
        }
    }

    let pad = N_FFT / 2;
    let natural = (frames - 1) * HOP;
    let want = length.unwrap_or(natural);
    let end = (pad + want).min(acc.len());
    acc[pad..end].to_vec()
}
