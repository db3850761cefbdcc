//! Stratified 2:1:1 train/validation/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TaskKind, TrialSet};
use crate::error::{Error, Result};

/// Split 2:1:1, stratified per (task, class) group.
///
/// Groups are shuffled deterministically under `seed` and apportioned by
/// largest remainder; remainder ties go to the earlier split in
/// (train, val, test) order. Groups are visited in lexicographic
/// (task, class) order so the partition is independent of trial ordering
/// within the manifest. Every class must have at least 4 trials per task.
pub fn split_dataset(set: &TrialSet, seed: u64) -> Result<(TrialSet, TrialSet, TrialSet)> {
    let indices = split_indices(set, seed)?;
    let pick = |idx: &[usize]| {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        TrialSet::new(sorted.iter().map(|&i| set.trials[i].clone()).collect())
    };
    Ok((pick(&indices[0]), pick(&indices[1]), pick(&indices[2])))
}

/// Index form of [`split_dataset`]: `[train, val, test]` positions into
/// `set.trials`.
pub fn split_indices(set: &TrialSet, seed: u64) -> Result<[Vec<usize>; 3]> {
    let mut groups: BTreeMap<(TaskKind, String), Vec<usize>> = BTreeMap::new();
    for (i, t) in set.trials.iter().enumerate() {
        groups
            .entry((t.task, t.class_label.clone()))
            .or_default()
            .push(i);
    }

    let mut out: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ((_, label), mut members) in groups {
        let n = members.len();
        if n < 4 {
            return Err(Error::ClassTooSmall { label, count: n });
        }
        members.shuffle(&mut rng);
        let counts = apportion(n);
        let mut offset = 0;
        for (split, &count) in counts.iter().enumerate() {
            out[split].extend_from_slice(&members[offset..offset + count]);
            offset += count;
        }
    }
    Ok(out)
}

/// Largest-remainder apportionment of `n` trials at ratio 2:1:1.
fn apportion(n: usize) -> [usize; 3] {
    let weights = [2.0, 1.0, 1.0];
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / 4.0).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut seats = n - counts.iter().sum::<usize>();
    // Distribute leftovers by descending fractional remainder; ties favor
    // the earlier split.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if seats == 0 {
            break;
        }
        counts[i] += 1;
        seats -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::EegTrial;
    use ndarray::Array2;
    use std::collections::BTreeSet;

    fn make_set(per_class: usize, classes: &[&str]) -> TrialSet {
        let mut trials = Vec::new();
        for class in classes {
            for rep in 0..per_class {
                trials.push(EegTrial {
                    id: format!("S01-spoken-{class}-{rep:03}"),
                    subject_id: "S01".into(),
                    task: TaskKind::Spoken,
                    class_label: class.to_string(),
                    data: Array2::zeros((2, 500)),
                    sample_rate_hz: 250.0,
                    channel_names: vec!["A".into(), "B".into()],
                    bad_channels: BTreeSet::new(),
                    annotation_time_s: None,
                    cpu_time_s: None,
                    duration_s: 2.0,
                    target_audio: None,
                });
            }
        }
        TrialSet::new(trials)
    }

    #[test]
    fn forty_per_class_gives_20_10_10() {
        let classes: Vec<String> = (0..10).map(|i| format!("C{i}")).collect();
        let refs: Vec<&str> = classes.iter().map(String::as_str).collect();
        let set = make_set(40, &refs);
        let (train, val, test) = split_dataset(&set, 42).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (200, 100, 100));
        for class in &classes {
            let count = |s: &TrialSet| s.trials.iter().filter(|t| &t.class_label == class).count();
            assert_eq!((count(&train), count(&val), count(&test)), (20, 10, 10));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let set = make_set(8, &["A", "B", "C"]);
        let a = split_indices(&set, 7).unwrap();
        let b = split_indices(&set, 7).unwrap();
        assert_eq!(a, b);
        let c = split_indices(&set, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn largest_remainder_for_ten() {
        // Quotas 5.0/2.5/2.5 floor to 5/2/2 with one seat left; remainders
        // tie at 0.5 and the earlier split (val) takes the seat: 5/3/2.
        assert_eq!(apportion(10), [5, 3, 2]);
        // Hand-enumeration of nearby sizes.
        assert_eq!(apportion(4), [2, 1, 1]);
        assert_eq!(apportion(5), [3, 1, 1]); // 2.5/1.25/1.25 -> seat to train
        assert_eq!(apportion(6), [3, 2, 1]); // 3.0/1.5/1.5 -> seat to val
        assert_eq!(apportion(7), [3, 2, 2]); // remainders .5/.75/.75 -> val, test
    }

    #[test]
    fn ten_trials_split_5_3_2_per_class() {
        let set = make_set(10, &["A"]);
        let (train, val, test) = split_dataset(&set, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (5, 3, 2));
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let set = make_set(11, &["A", "B"]);
        let idx = split_indices(&set, 3).unwrap();
        let mut all: Vec<usize> = idx.iter().flatten().copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..set.len()).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn class_below_four_rejected() {
        let set = make_set(3, &["A"]);
        assert!(matches!(
            split_dataset(&set, 0),
            Err(Error::ClassTooSmall { .. })
        ));
    }
}
