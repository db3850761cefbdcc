//! JSON trial manifests.
//!
//! A manifest is one JSON document listing every trial with relative paths
//! to its matrix file and, for spoken trials, its WAV recording. Imagined
//! trials are paired with the spoken recording of the same class label and
//! repetition index, falling back to the first spoken recording of that
//! class.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{matrix, EegTrial, TaskKind, TrialSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    pub subject_id: String,
    pub task: String,
    pub class_label: String,
    pub matrix: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    pub channels: usize,
    pub samples: usize,
    pub channel_names: Vec<String>,
    #[serde(default)]
    pub bad_channels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_time_s: Option<f64>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sample_rate_hz: f64,
    pub trials: Vec<TrialRecord>,
}

/// Load a manifest and all referenced matrices into a validated [`TrialSet`].
pub fn load_trialset(manifest_path: &Path) -> Result<TrialSet> {
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut trials = Vec::with_capacity(manifest.trials.len());
    for rec in &manifest.trials {
        let task = TaskKind::parse(&rec.task)?;
        let matrix_path = base.join(&rec.matrix);
        let data32 = matrix::read_f32(&matrix_path)?;
        if data32.nrows() != rec.channels || data32.ncols() != rec.samples {
            return Err(Error::ShapeMismatch(format!(
                "trial {}: manifest declares {}x{}, file holds {}x{}",
                rec.id,
                rec.channels,
                rec.samples,
                data32.nrows(),
                data32.ncols()
            )));
        }
        let audio = match &rec.audio {
            Some(rel) => {
                let p = base.join(rel);
                if !p.exists() {
                    return Err(Error::MissingFile(p));
                }
                Some(p)
            }
            None => None,
        };
        trials.push(EegTrial {
            id: rec.id.clone(),
            subject_id: rec.subject_id.clone(),
            task,
            class_label: rec.class_label.clone(),
            data: data32.mapv(f64::from),
            sample_rate_hz: manifest.sample_rate_hz,
            channel_names: rec.channel_names.clone(),
            bad_channels: rec.bad_channels.iter().copied().collect(),
            annotation_time_s: rec.annotation_time_s,
            cpu_time_s: rec.cpu_time_s,
            duration_s: rec.duration_s,
            target_audio: audio,
        });
    }

    pair_imagined_targets(&mut trials);

    let set = TrialSet::new(trials);
    set.validate()?;
    Ok(set)
}

/// Fill `target_audio` for imagined trials from spoken trials of the same
/// class, matching repetition indices within a subject where possible.
fn pair_imagined_targets(trials: &mut [EegTrial]) {
    // Spoken recordings keyed by (subject, class), in manifest order.
    let mut spoken: HashMap<(String, String), Vec<PathBuf>> = HashMap::new();
    let mut spoken_any_class: HashMap<String, PathBuf> = HashMap::new();
    for t in trials.iter() {
        if t.task == TaskKind::Spoken {
            if let Some(a) = &t.target_audio {
                spoken
                    .entry((t.subject_id.clone(), t.class_label.clone()))
                    .or_default()
                    .push(a.clone());
                spoken_any_class
                    .entry(t.class_label.clone())
                    .or_insert_with(|| a.clone());
            }
        }
    }

    let mut rep: HashMap<(String, String), usize> = HashMap::new();
    for t in trials.iter_mut() {
        if t.task != TaskKind::Imagined || t.target_audio.is_some() {
            continue;
        }
        let key = (t.subject_id.clone(), t.class_label.clone());
        let r = rep.entry(key.clone()).or_insert(0);
        let choice = spoken
            .get(&key)
            .and_then(|list| list.get(*r).or_else(|| list.first()))
            .cloned()
            .or_else(|| spoken_any_class.get(&t.class_label).cloned());
        t.target_audio = choice;
        *r += 1;
    }
}

/// Persist a trial set: matrices under `trials/`, manifest at `dir/manifest.json`.
///
/// Audio paths already under `dir` are stored relative to it; matrices are
/// rewritten as f32.
pub fn save_trialset(dir: &Path, set: &TrialSet) -> Result<PathBuf> {
    let trials_dir = dir.join("trials");
    fs::create_dir_all(&trials_dir).map_err(|e| Error::io(&trials_dir, e))?;

    let mut records = Vec::with_capacity(set.trials.len());
    let mut rate = None;
    for t in &set.trials {
        rate.get_or_insert(t.sample_rate_hz);
        let rel = PathBuf::from("trials").join(format!("{}.mat", t.id));
        matrix::write_f32(&dir.join(&rel), &t.data.mapv(|v| v as f32))?;
        let audio = t
            .target_audio
            .as_ref()
            .map(|p| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.clone()));
        records.push(TrialRecord {
            id: t.id.clone(),
            subject_id: t.subject_id.clone(),
            task: t.task.as_str().to_string(),
            class_label: t.class_label.clone(),
            matrix: rel,
            audio,
            channels: t.data.nrows(),
            samples: t.data.ncols(),
            channel_names: t.channel_names.clone(),
            bad_channels: t.bad_channels.iter().copied().collect(),
            annotation_time_s: t.annotation_time_s,
            cpu_time_s: t.cpu_time_s,
            duration_s: t.duration_s,
        });
    }

    let manifest = Manifest {
        version: 1,
        sample_rate_hz: rate.unwrap_or(250.0),
        trials: records,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialize: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Roster size helper used by loaders and reports.
pub fn roster_of(set: &TrialSet) -> BTreeSet<String> {
    set.class_roster.clone()
}
