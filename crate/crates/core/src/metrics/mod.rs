//! Acoustic and linguistic evaluation: CER/WER, PCC, RMSE, DTW, MCD.

pub mod dtw;
pub mod mcd;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{MelSpectrogram, Waveform};
use crate::error::{Error, Result};

pub use dtw::dtw_align;
pub use mcd::{mcd, mcd_from_cepstra, mel_cepstra};

/// Levenshtein distance over arbitrary comparable tokens.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for i in 1..=n {
        curr[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Edit-path operations from a deterministic Levenshtein backtrace.
///
/// Ties prefer diagonal moves, then deletion, then insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    /// (ref index, hyp index), equal tokens.
    Match(usize, usize),
    /// (ref index, hyp index), differing tokens.
    Substitute(usize, usize),
    /// ref index with no hyp counterpart.
    Delete(usize),
    /// hyp index with no ref counterpart.
    Insert(usize),
}

pub fn align<T: PartialEq>(a: &[T], b: &[T]) -> Vec<AlignOp> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = (dp[i - 1][j - 1] + cost)
                .min(dp[i - 1][j] + 1)
                .min(dp[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + cost {
                ops.push(if cost == 0 {
                    AlignOp::Match(i - 1, j - 1)
                } else {
                    AlignOp::Substitute(i - 1, j - 1)
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            ops.push(AlignOp::Delete(i - 1));
            i -= 1;
        } else {
            ops.push(AlignOp::Insert(j - 1));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Character error rate: edit distance over characters (spaces included)
/// divided by the reference length. Empty reference scores 1.0 against a
/// nonempty hypothesis and 0.0 against an empty one.
pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return if h.is_empty() { 0.0 } else { 1.0 };
    }
    levenshtein(&r, &h) as f64 / r.len() as f64
}

/// Word error rate over whitespace-separated tokens; same conventions as
/// [`cer`].
pub fn wer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    if r.is_empty() {
        return if h.is_empty() { 0.0 } else { 1.0 };
    }
    levenshtein(&r, &h) as f64 / r.len() as f64
}

/// Pearson correlation of two equally shaped matrices flattened across both
/// dimensions. No lag correction, no voiced/unvoiced split.
pub fn pcc_matrices(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "pcc: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Err(Error::EmptyInput("pcc"));
    }
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// PCC over two Mel spectrograms.
pub fn pcc(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    pcc_matrices(&a.values, &b.values)
}

/// Root mean square error across all time frames and Mel bins.
pub fn rmse_matrices(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "rmse: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("rmse"));
    }
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += (x - y) * (x - y);
    }
    Ok((acc / a.len() as f64).sqrt())
}

pub fn rmse(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    rmse_matrices(&a.values, &b.values)
}

/// One evaluated trial: reconstruction against its target.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub trial_id: String,
    pub group: String,
    pub target_mel: MelSpectrogram,
    pub recon_mel: MelSpectrogram,
    pub target_wav: Waveform,
    pub recon_wav: Waveform,
    pub ref_text: String,
    pub hyp_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialMetrics {
    pub trial_id: String,
    pub group: String,
    pub cer: f64,
    pub wer: f64,
    pub rmse: f64,
    pub mcd_db: f64,
    pub pcc: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0.0 for a single trial.
    pub sd: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate { mean: f64::NAN, sd: f64::NAN, n: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Aggregate { mean, sd, n }
}

/// Per-trial metrics plus per-group mean +/- s.d. aggregates, keyed
/// `group -> metric -> aggregate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub per_trial: Vec<TrialMetrics>,
    pub aggregates: BTreeMap<String, BTreeMap<String, Aggregate>>,
}

pub const METRIC_NAMES: [&str; 5] = ["cer", "wer", "rmse", "mcd", "pcc"];

impl MetricsReport {
    fn metric_of(t: &TrialMetrics, name: &str) -> f64 {
        match name {
            "cer" => t.cer,
            "wer" => t.wer,
            "rmse" => t.rmse,
            "mcd" => t.mcd_db,
            "pcc" => t.pcc,
            _ => unreachable!(),
        }
    }

    pub fn from_trials(per_trial: Vec<TrialMetrics>) -> Self {
        let mut groups: BTreeMap<String, Vec<&TrialMetrics>> = BTreeMap::new();
        for t in &per_trial {
            groups.entry(t.group.clone()).or_default().push(t);
        }
        let mut aggregates = BTreeMap::new();
        for (group, trials) in groups {
            let mut per_metric = BTreeMap::new();
            for name in METRIC_NAMES {
                let vals: Vec<f64> = trials.iter().map(|t| Self::metric_of(t, name)).collect();
                per_metric.insert(name.to_string(), aggregate(&vals));
            }
            aggregates.insert(group, per_metric);
        }
        MetricsReport { per_trial, aggregates }
    }
}

/// Evaluate matched (target, reconstruction) trials.
pub fn evaluate(items: &[EvalItem]) -> Result<MetricsReport> {
    let mut per_trial = Vec::with_capacity(items.len());
    for item in items {
        if item.target_mel.values.dim() != item.recon_mel.values.dim() {
            return Err(Error::ShapeMismatch(format!(
                "trial {}: unmatched pair, target {:?} vs reconstruction {:?}",
                item.trial_id,
                item.target_mel.values.dim(),
                item.recon_mel.values.dim()
            )));
        }
        per_trial.push(TrialMetrics {
            trial_id: item.trial_id.clone(),
            group: item.group.clone(),
            cer: cer(&item.ref_text, &item.hyp_text),
            wer: wer(&item.ref_text, &item.hyp_text),
            rmse: rmse(&item.target_mel, &item.recon_mel)?,
            mcd_db: mcd(&item.target_wav, &item.recon_wav)?,
            pcc: pcc(&item.target_mel, &item.recon_mel)?,
        });
    }
    Ok(MetricsReport::from_trials(per_trial))
}
