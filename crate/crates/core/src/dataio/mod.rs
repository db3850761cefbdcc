//! Trial data model, on-disk formats, timing validation, and dataset splitting.

pub mod manifest;
pub mod matrix;
pub mod split;
pub mod wav;

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_trialset, save_trialset, Manifest, TrialRecord};
pub use split::split_dataset;

/// Speech production task a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Spoken,
    Imagined,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Spoken => "spoken",
            TaskKind::Imagined => "imagined",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spoken" => Ok(TaskKind::Spoken),
            "imagined" => Ok(TaskKind::Imagined),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// One segmented neural-signal trial: channels x samples plus recording metadata.
#[derive(Debug, Clone)]
pub struct EegTrial {
    pub id: String,
    pub subject_id: String,
    pub task: TaskKind,
    /// Stimulus text, uppercase words.
    pub class_label: String,
    pub data: Array2<f64>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub bad_channels: BTreeSet<usize>,
    pub annotation_time_s: Option<f64>,
    pub cpu_time_s: Option<f64>,
    pub duration_s: f64,
    /// Target speech recording: own recording for spoken trials, the paired
    /// spoken-task recording for imagined trials.
    pub target_audio: Option<PathBuf>,
}

impl EegTrial {
    /// Check the structural invariants: at least one good channel, sample
    /// count consistent with the declared duration, bad indices in range.
    pub fn validate(&self) -> Result<()> {
        let (channels, samples) = (self.data.nrows(), self.data.ncols());
        if self.bad_channels.len() >= channels {
            return Err(Error::AllChannelsBad);
        }
        if let Some(&worst) = self.bad_channels.iter().next_back() {
            if worst >= channels {
                return Err(Error::ShapeMismatch(format!(
                    "trial {}: bad channel index {worst} out of range for {channels} channels",
                    self.id
                )));
            }
        }
        let expected = (self.duration_s * self.sample_rate_hz).round() as usize;
        if samples != expected {
            return Err(Error::ShapeMismatch(format!(
                "trial {}: {samples} samples, expected {expected} for {}s at {} Hz",
                self.id, self.duration_s, self.sample_rate_hz
            )));
        }
        if self.channel_names.len() != channels {
            return Err(Error::ShapeMismatch(format!(
                "trial {}: {} channel names for {channels} channels",
                self.id,
                self.channel_names.len()
            )));
        }
        Ok(())
    }
}

/// Collection of trials with their class roster and resolved audio targets.
#[derive(Debug, Clone, Default)]
pub struct TrialSet {
    pub trials: Vec<EegTrial>,
    pub class_roster: BTreeSet<String>,
}

impl TrialSet {
    pub fn new(trials: Vec<EegTrial>) -> Self {
        let class_roster = trials.iter().map(|t| t.class_label.clone()).collect();
        TrialSet { trials, class_roster }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Trials of one task, preserving order.
    pub fn filter_task(&self, task: TaskKind) -> TrialSet {
        TrialSet::new(
            self.trials
                .iter()
                .filter(|t| t.task == task)
                .cloned()
                .collect(),
        )
    }

    /// Check roster membership and imagined-trial target pairing.
    pub fn validate(&self) -> Result<()> {
        for t in &self.trials {
            t.validate()?;
            if !self.class_roster.contains(&t.class_label) {
                return Err(Error::Format(format!(
                    "trial {}: class {:?} not in roster",
                    t.id, t.class_label
                )));
            }
            if t.task == TaskKind::Imagined && t.target_audio.is_none() {
                return Err(Error::Format(format!(
                    "imagined trial {}: no spoken-task target recording for class {:?}",
                    t.id, t.class_label
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of comparing a trial's two timing sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentVerdict {
    Pass,
    Fail,
    Missing,
}

/// Dual-validation result for one trial's segmentation timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub trial_id: String,
    pub annotation_vs_cpu_offset_s: Option<f64>,
    pub verdict: AlignmentVerdict,
}

/// Compare annotation and CPU timestamps against a tolerance.
///
/// Pure function of the two timestamps: pass iff the absolute offset is
/// within `tolerance_s`, missing if either timestamp is absent.
pub fn validate_alignment(trial: &EegTrial, tolerance_s: f64) -> AlignmentReport {
    let (ann, cpu) = (trial.annotation_time_s, trial.cpu_time_s);
    match (ann, cpu) {
        (Some(a), Some(c)) => {
            let offset = a - c;
            let verdict = if offset.abs() <= tolerance_s {
                AlignmentVerdict::Pass
            } else {
                AlignmentVerdict::Fail
            };
            AlignmentReport {
                trial_id: trial.id.clone(),
                annotation_vs_cpu_offset_s: Some(offset),
                verdict,
            }
        }
        _ => AlignmentReport {
            trial_id: trial.id.clone(),
            annotation_vs_cpu_offset_s: None,
            verdict: AlignmentVerdict::Missing,
        },
    }
}
