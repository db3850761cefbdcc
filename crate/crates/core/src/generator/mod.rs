//! Subject-specific open-loop EEG-to-Mel generator.
//!
//! The stack is embedding -> temporal-convolution encoder blocks ->
//! depthwise local-context adapter -> linear time-base resampler ->
//! pointwise Mel decoder, with a pointwise frame-classifier head for the
//! CTC path. No attention, and generated output never feeds back in. All
//! arithmetic is f64 with exact hand-derived reverse-mode gradients.

mod checkpoint;
mod model;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{GeneratorModel, Params};
pub use optim::{adamw_step, AdamWState};
pub use train::{train, transfer_init, EpochRecord, TrainHistory, TrainItem};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EEG sampling rate the time-base resampler assumes.
pub const EEG_RATE_HZ: f64 = 250.0;

/// Mel frames per EEG sample count: `floor(t_eeg * 22050 / (250 * 256)) + 1`,
/// matching the center-padded STFT frame count of an equally long waveform.
pub fn mel_frames_for_eeg(t_eeg: usize) -> usize {
    (t_eeg as u64 * 22050 / (250 * 256)) as usize + 1
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub embed_dim: usize,
    pub encoder_blocks: usize,
    /// Encoder convolution width (odd).
    pub encoder_kernel: usize,
    /// Local-context adapter width (odd).
    pub kernel: usize,
    pub mel_bands: usize,
    /// Token inventory size including blank.
    pub vocab_size: usize,
    pub lambda_rec: f64,
    pub lambda_ctc: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 32,
            embed_dim: 64,
            encoder_blocks: 3,
            encoder_kernel: 3,
            kernel: 9,
            mel_bands: crate::audio::N_MELS,
            vocab_size: crate::ctc::VOCAB_SIZE,
            lambda_rec: 1.0,
            lambda_ctc: 0.1,
            lr: 1e-4,
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-2,
            weight_decay: 0.0,
            epochs: 1500,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.encoder_kernel % 2 == 0 {
            return Err(Error::InvalidArgument("convolution widths must be odd".into()));
        }
        if self.lambda_rec < 0.0 || self.lambda_ctc < 0.0 {
            return Err(Error::InvalidArgument("loss weights must be nonnegative".into()));
        }
        if self.lambda_rec == 0.0 && self.lambda_ctc == 0.0 {
            return Err(Error::InvalidArgument("at least one loss weight must be positive".into()));
        }
        if self.in_channels == 0 || self.embed_dim == 0 || self.mel_bands == 0 {
            return Err(Error::InvalidArgument("zero-sized model dimension".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidArgument("vocab must include blank and one symbol".into()));
        }
        Ok(())
    }

    /// Structural fields that must match for weight transfer.
    pub fn architecture_matches(&self, other: &GeneratorConfig) -> bool {
        self.in_channels == other.in_channels
            && self.embed_dim == other.embed_dim
            && self.encoder_blocks == other.encoder_blocks
            && self.encoder_kernel == other.encoder_kernel
            && self.kernel == other.kernel
            && self.mel_bands == other.mel_bands
            && self.vocab_size == other.vocab_size
    }
}

/// Weighted loss components for one step or epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_rec: f64,
    pub l_ctc: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(l_rec: f64, l_ctc: f64, lambda_rec: f64, lambda_ctc: f64) -> Self {
        LossBreakdown { l_rec, l_ctc, total: lambda_rec * l_rec + lambda_ctc * l_ctc }
    }
}
