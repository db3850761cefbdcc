//! Mel-cepstral distortion.
//!
//! Cepstra are the first 24 DCT-II coefficients (c0 excluded, so gain
//! changes cancel) of the log-Mel band energies, with silent frames removed
//! by energy VAD before alignment. Sequences are DTW-aligned on Euclidean
//! distance and scored as `(10/ln 10) * sqrt(2 * mean ||c - c_hat||^2)`.

use ndarray::Array2;

use super::dtw::dtw_align;
use crate::audio::{mel_project, resample, stft_magnitudes, vad_mask, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

pub const N_CEPSTRA: usize = 24;
const VAD_DROP_DB: f64 = 40.0;

/// Log floor for the cepstral path. Much deeper than the 1e-5 feature
/// floor: a hard floor near signal level breaks the c0-exclusion gain
/// cancellation, because a gain change then shifts only the unfloored
/// bands.
const CEPSTRAL_FLOOR: f64 = 1e-10;

/// 24-coefficient mel-cepstra of the voiced frames of a 22.05 kHz waveform.
pub fn mel_cepstra(w: &Waveform) -> Result<Array2<f64>> {
    if w.rate_hz != 22050 {
        return Err(Error::InvalidArgument(format!(
            "mel_cepstra expects 22050 Hz, got {}",
            w.rate_hz
        )));
    }
    let bands = mel_project(&stft_magnitudes(w)?)?;
    let mel = MelSpectrogram::from_values(bands.mapv(|v| v.max(CEPSTRAL_FLOOR).ln()))?;
    cepstra_of_mel(&mel)
}

/// Cepstra from an existing log-Mel spectrogram, voiced frames only.
pub fn cepstra_of_mel(mel: &MelSpectrogram) -> Result<Array2<f64>> {
    let mask = vad_mask(mel, VAD_DROP_DB);
    let f = mel.values.ncols();
    let voiced: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| v.then_some(i))
        .collect();

    // VAD keeps the argmax frame even for digital silence; detect the
    // all-floor case from the values themselves. Inputs may carry either
    // the feature floor or the deeper cepstral floor.
    for floor in [CEPSTRAL_FLOOR.ln(), crate::audio::LOG_FLOOR.ln()] {
        if mel.values.iter().all(|&v| (v - floor).abs() < 1e-9) {
            return Ok(Array2::zeros((0, N_CEPSTRA)));
        }
    }

    let mut out = Array2::zeros((voiced.len(), N_CEPSTRA));
    let scale = (2.0 / f as f64).sqrt();
    for (row, &t) in voiced.iter().enumerate() {
        let frame = mel.values.row(t);
        for k in 1..=N_CEPSTRA {
            let mut acc = 0.0;
            for (j, &v) in frame.iter().enumerate() {
                acc += v
                    * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / f as f64).cos();
            }
            out[[row, k - 1]] = scale * acc;
        }
    }
    Ok(out)
}

/// MCD in dB from two pre-extracted cepstral sequences.
pub fn mcd_from_cepstra(c_ref: &Array2<f64>, c_hyp: &Array2<f64>) -> Result<f64> {
    if c_ref.nrows() == 0 || c_hyp.nrows() == 0 {
        return Err(Error::NoVoicedFrames);
    }
    let (path, _) = dtw_align(c_ref, c_hyp)?;
    let mean_sq = path
        .iter()
        .map(|&(i, j)| {
            c_ref
                .row(i)
                .iter()
                .zip(c_hyp.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / path.len() as f64;
    Ok(10.0 / std::f64::consts::LN_10 * (2.0 * mean_sq).sqrt())
}

/// MCD between two waveforms; inputs at other rates are resampled to the
/// 22.05 kHz analysis rate first.
pub fn mcd(reference: &Waveform, hypothesis: &Waveform) -> Result<f64> {
    let r = if reference.rate_hz == 22050 {
        reference.clone()
    } else {
        resample(reference, 22050)?
    };
    let h = if hypothesis.rate_hz == 22050 {
        hypothesis.clone()
    } else {
        resample(hypothesis, 22050)?
    };
    mcd_from_cepstra(&mel_cepstra(&r)?, &mel_cepstra(&h)?)
}
