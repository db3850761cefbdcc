//! Mel filterbank, log compression, VAD, and spectrogram containers.

use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::stft::{ANALYSIS_RATE_HZ, HOP, N_BINS, N_FFT};
use crate::dataio::matrix;
use crate::error::{Error, Result};

pub const N_MELS: usize = 80;
pub const FMIN_HZ: f64 = 0.0;
pub const FMAX_HZ: f64 = 8000.0;

/// Floor inside `ln(max(x, 1e-5))`.
pub const LOG_FLOOR: f64 = 1e-5;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank on the HTK Mel scale with Slaney-style area
/// normalization, plus cached factors for approximate inversion.
pub struct MelFilterbank {
    /// `n_mels x n_bins` nonnegative weights.
    pub weights: Array2<f64>,
    /// Hz centers of each band (for probing tests).
    pub centers_hz: Vec<f64>,
    chol: Array2<f64>,
    lipschitz: f64,
}

impl MelFilterbank {
    pub fn new() -> Self {
        let mut weights = Array2::zeros((N_MELS, N_BINS));
        let mel_lo = hz_to_mel(FMIN_HZ);
        let mel_hi = hz_to_mel(FMAX_HZ);
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let bin_hz = ANALYSIS_RATE_HZ as f64 / N_FFT as f64;
        for b in 0..N_MELS {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let norm = 2.0 / (hi - lo);
            for k in 0..N_BINS {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
                weights[[b, k]] = w * norm;
            }
        }

        let chol = cholesky_of_gram(&weights);
        let lipschitz = power_iteration_sq_norm(&weights);
        MelFilterbank {
            weights,
            centers_hz: (0..N_MELS).map(|b| edges[b + 1]).collect(),
            chol,
            lipschitz,
        }
    }

    /// Shared default instance.
    pub fn shared() -> &'static MelFilterbank {
        static FB: OnceLock<MelFilterbank> = OnceLock::new();
        FB.get_or_init(MelFilterbank::new)
    }

    /// Project magnitude spectra (`T x 513`) onto the Mel bands (`T x 80`).
    pub fn project(&self, stft_mag: &Array2<f64>) -> Result<Array2<f64>> {
        if stft_mag.ncols() != N_BINS {
            return Err(Error::ShapeMismatch(format!(
                "mel projection expects {N_BINS} bins, got {}",
                stft_mag.ncols()
            )));
        }
        Ok(stft_mag.dot(&self.weights.t()))
    }

    /// Approximate inverse of one Mel frame by non-negative least squares:
    /// a ridge-regularized least-norm start refined with projected gradient.
    pub fn invert_frame(&self, mel: &Array1<f64>, iters: usize) -> Array1<f64> {
        // Start: F^T (F F^T + eps I)^{-1} m, clipped at zero.
        let rhs = chol_solve(&self.chol, mel);
        let mut s = self.weights.t().dot(&rhs);
        s.mapv_inplace(|v| v.max(0.0));
        let step = 1.0 / self.lipschitz;
        for _ in 0..iters {
            let resid = self.weights.dot(&s) - mel;
            let grad = self.weights.t().dot(&resid);
            s.zip_mut_with(&grad, |sv, &gv| *sv = (*sv - step * gv).max(0.0));
        }
        s
    }
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new()
    }
}

fn cholesky_of_gram(weights: &Array2<f64>) -> Array2<f64> {
    let n = weights.nrows();
    let mut g = weights.dot(&weights.t());
    let ridge = 1e-10 * g.diag().iter().sum::<f64>() / n as f64;
    for i in 0..n {
        g[[i, i]] += ridge;
    }
    // In-place lower Cholesky.
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                l[[i, j]] = sum.max(1e-300).sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    l
}

fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

fn power_iteration_sq_norm(weights: &Array2<f64>) -> f64 {
    let mut v = Array1::<f64>::ones(weights.ncols());
    let mut lambda = 1.0;
    for _ in 0..30 {
        let w = weights.t().dot(&weights.dot(&v));
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda == 0.0 {
            return 1.0;
        }
        v = w / lambda;
    }
    lambda * 1.05 // small safety margin on the step bound
}

/// `T x 80` log-amplitude Mel spectrogram with its analysis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub hop: usize,
    pub n_fft: usize,
    pub rate_hz: u32,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct MelSidecar {
    hop: usize,
    n_fft: usize,
    rate_hz: u32,
    fmin_hz: f64,
    fmax_hz: f64,
    normalized: bool,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.ncols() != N_MELS {
            return Err(Error::ShapeMismatch(format!(
                "mel spectrogram needs {N_MELS} bands, got {}",
                values.ncols()
            )));
        }
        Ok(MelSpectrogram {
            values,
            hop: HOP,
            n_fft: N_FFT,
            rate_hz: ANALYSIS_RATE_HZ,
            fmin_hz: FMIN_HZ,
            fmax_hz: FMAX_HZ,
            normalized: false,
        })
    }

    /// Write as an f32 matrix plus a JSON parameter sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        matrix::write_f32(path, &self.values.mapv(|v| v as f32))?;
        let sidecar = MelSidecar {
            hop: self.hop,
            n_fft: self.n_fft,
            rate_hz: self.rate_hz,
            fmin_hz: self.fmin_hz,
            fmax_hz: self.fmax_hz,
            normalized: self.normalized,
        };
        let side_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Format(format!("mel sidecar: {e}")))?;
        std::fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let values = matrix::read_f32(path)?.mapv(f64::from);
        let side_path = path.with_extension("json");
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: MelSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("mel sidecar: {e}")))?;
        Ok(MelSpectrogram {
            values,
            hop: side.hop,
            n_fft: side.n_fft,
            rate_hz: side.rate_hz,
            fmin_hz: side.fmin_hz,
            fmax_hz: side.fmax_hz,
            normalized: side.normalized,
        })
    }
}

/// Project STFT magnitudes through the shared filterbank.
pub fn mel_project(stft_mag: &Array2<f64>) -> Result<Array2<f64>> {
    MelFilterbank::shared().project(stft_mag)
}

/// `ln(max(x, 1e-5))` elementwise; rejects negative inputs.
pub fn log_compress(mel: &Array2<f64>) -> Result<MelSpectrogram> {
    if mel.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeInput("log_compress"));
    }
    MelSpectrogram::from_values(mel.mapv(|v| v.max(LOG_FLOOR).ln()))
}

/// Energy-based voiced-frame mask.
///
/// A frame is voiced when its log mean band amplitude is within `drop_db`
/// (amplitude dB) of the loudest frame. The argmax frame is always voiced.
pub fn vad_mask(mel: &MelSpectrogram, drop_db: f64) -> Vec<bool> {
    let energies: Vec<f64> = mel
        .values
        .rows()
        .into_iter()
        .map(|r| (r.mapv(f64::exp).sum() / r.len() as f64).ln())
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max - drop_db * std::f64::consts::LN_10 / 20.0;
    energies.iter().map(|&e| e >= threshold).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{stft_magnitudes, Waveform};

    #[test]
    fn zero_spectrum_projects_to_zero() {
        let m = mel_project(&Array2::zeros((3, N_BINS))).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_at_1khz_bin_hits_straddling_bands() {
        let fb = MelFilterbank::shared();
        let mut mag = Array2::zeros((1, N_BINS));
        mag[[0, 46]] = 1.0; // bin 46 is ~990.5 Hz
        let mel = fb.project(&mag).unwrap();
        let f_bin = 46.0 * ANALYSIS_RATE_HZ as f64 / N_FFT as f64;
        let mut support = Vec::new();
        for b in 0..N_MELS {
            if mel[[0, b]] > 0.0 {
                support.push(b);
            }
        }
        assert!(!support.is_empty() && support.len() <= 2, "support {support:?}");
        // The activated bands straddle the bin frequency.
        for &b in &support {
            assert!((fb.centers_hz[b] - f_bin).abs() < 200.0);
        }
    }

    #[test]
    fn flat_spectrum_gives_all_positive_bands() {
        let mag = Array2::from_elem((2, N_BINS), 1.0);
        let mel = mel_project(&mag).unwrap();
        assert!(mel.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn projection_is_linear_and_monotone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Array2::from_shape_fn((2, N_BINS), |_| rng.random::<f64>());
        let b = Array2::from_shape_fn((2, N_BINS), |_| rng.random::<f64>());
        let pa = mel_project(&a).unwrap();
        let pb = mel_project(&b).unwrap();
        let psum = mel_project(&(&a + &b)).unwrap();
        for ((x, y), z) in pa.iter().zip(pb.iter()).zip(psum.iter()) {
            assert!((x + y - z).abs() < 1e-9);
        }
        // Monotone: larger spectra give elementwise >= Mel values.
        let bigger = &a + &Array2::from_elem(a.raw_dim(), 0.5);
        let pbig = mel_project(&bigger).unwrap();
        for (small, big) in pa.iter().zip(pbig.iter()) {
            assert!(big >= small);
        }
    }

    #[test]
    fn log_compress_fixed_points() {
        let m = ndarray::array![[0.0, 1.0, std::f64::consts::E]];
        let mut wide = Array2::from_elem((1, N_MELS), 1.0);
        wide[[0, 0]] = m[[0, 0]];
        wide[[0, 2]] = m[[0, 2]];
        let out = log_compress(&wide).unwrap();
        assert!((out.values[[0, 0]] - LOG_FLOOR.ln()).abs() < 1e-12);
        assert!((out.values[[0, 0]] + 11.512925).abs() < 1e-6);
        assert_eq!(out.values[[0, 1]], 0.0);
        assert!((out.values[[0, 2]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_compress_rejects_negative() {
        let m = Array2::from_elem((1, N_MELS), -0.5);
        assert!(matches!(log_compress(&m), Err(Error::NegativeInput(_))));
    }

    #[test]
    fn log_exp_identity_above_floor() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = Array2::from_shape_fn((3, N_MELS), |_| rng.random::<f64>() + LOG_FLOOR);
        let out = log_compress(&m).unwrap();
        let back = out.values.mapv(f64::exp);
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn vad_all_equal_frames_voiced() {
        let mel = MelSpectrogram::from_values(Array2::from_elem((5, N_MELS), -2.0)).unwrap();
        assert!(vad_mask(&mel, 40.0).iter().all(|&v| v));
    }

    #[test]
    fn vad_single_loud_frame() {
        let mut values = Array2::from_elem((6, N_MELS), LOG_FLOOR.ln());
        values.row_mut(3).fill(0.0);
        let mel = MelSpectrogram::from_values(values).unwrap();
        let mask = vad_mask(&mel, 40.0);
        assert_eq!(mask.iter().filter(|&&v| v).count(), 1);
        assert!(mask[3]);
    }

    #[test]
    fn vad_half_silence() {
        // One second of tone followed by one second of silence.
        let rate = ANALYSIS_RATE_HZ;
        let mut samples: Vec<f64> = (0..rate as usize)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 700.0 * i as f64 / rate as f64).sin())
            .collect();
        samples.extend(std::iter::repeat_n(0.0, rate as usize));
        let w = Waveform { samples, rate_hz: rate };
        let mag = stft_magnitudes(&w).unwrap();
        let mel = log_compress(&mel_project(&mag).unwrap()).unwrap();
        let mask = vad_mask(&mel, 40.0);
        let voiced = mask.iter().filter(|&&v| v).count() as f64 / mask.len() as f64;
        assert!((0.4..=0.6).contains(&voiced), "voiced fraction {voiced}");
    }

    #[test]
    fn pseudo_inverse_then_forward_recovers_band_energies() {
        // Smooth spectrum: inversion then projection within 5% per band.
        let fb = MelFilterbank::shared();
        let mut mag = Array2::zeros((1, N_BINS));
        for k in 0..N_BINS {
            let f = k as f64 * ANALYSIS_RATE_HZ as f64 / N_FFT as f64;
            mag[[0, k]] = (-(f - 2000.0) * (f - 2000.0) / (2.0 * 1500.0 * 1500.0)).exp();
        }
        let mel = fb.project(&mag).unwrap();
        let frame = mel.row(0).to_owned();
        let inv = fb.invert_frame(&frame, 60);
        let re = fb.weights.dot(&inv);
        for (a, b) in frame.iter().zip(re.iter()) {
            if *a > 1e-3 {
                assert!((a - b).abs() / a < 0.05, "band energy {a} vs {b}");
            }
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mel");
        let mel = MelSpectrogram::from_values(Array2::from_shape_fn((7, N_MELS), |(i, j)| {
            (i as f64 - j as f64) / 17.0
        }))
        .unwrap();
        mel.save(&p).unwrap();
        let back = MelSpectrogram::load(&p).unwrap();
        assert_eq!(back.hop, HOP);
        assert_eq!(back.frames(), 7);
        for (a, b) in mel.values.iter().zip(back.values.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
