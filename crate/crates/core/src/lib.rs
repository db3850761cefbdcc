//! Open-loop EEG-to-speech decoding at desk scale.
//!
//! The crate covers the full chain: trial data I/O, EEG preprocessing,
//! log-Mel feature extraction, a subject-specific EEG-to-Mel generator
//! trained with a joint MAE + CTC objective, pluggable vocoder/ASR/LM
//! backends with from-scratch references, minimal language-model text
//! correction, acoustic and linguistic metrics, and word-position error
//! regression. A synthetic trial generator makes the whole pipeline
//! verifiable end to end without recording hardware.

pub mod audio;
pub mod dataio;
pub mod ctc;
pub mod error;
pub mod metrics;
pub mod signal;

pub use audio::{MelSpectrogram, Waveform};
pub use dataio::{EegTrial, TaskKind, TrialSet};
pub use error::{Error, Result};
