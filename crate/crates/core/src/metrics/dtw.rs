//! Dynamic time warping over Euclidean frame distances.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

fn euclid(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Optimal monotone boundary-anchored alignment with steps
/// {(1,0),(0,1),(1,1)}; returns the path and its summed frame distance.
pub fn dtw_align(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Vec<(usize, usize)>, f64)> {
    let (n, m) = (a.nrows(), b.nrows());
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("dtw sequences"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "dtw frame dims {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }

    let mut cost = Array2::<f64>::from_elem((n, m), f64::INFINITY);
    // Backpointer: 0 = diagonal, 1 = from (i-1, j), 2 = from (i, j-1).
    let mut back = Array2::<u8>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let d = euclid(a.row(i), b.row(j));
            let (prev, ptr) = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let diag = if i > 0 && j > 0 { cost[[i - 1, j - 1]] } else { f64::INFINITY };
                let up = if i > 0 { cost[[i - 1, j]] } else { f64::INFINITY };
                let left = if j > 0 { cost[[i, j - 1]] } else { f64::INFINITY };
                if diag <= up && diag <= left {
                    (diag, 0)
                } else if up <= left {
                    (up, 1)
                } else {
                    (left, 2)
                }
            };
            cost[[i, j]] = prev + d;
            back[[i, j]] = ptr;
        }
    }

    let mut path = Vec::new();
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match back[[i, j]] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    path.reverse();
    Ok((path, cost[[n - 1, m - 1]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    /// Exhaustive minimal-cost path by recursion; exponential, test-only.
    pub(crate) fn dtw_cost_oracle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        fn rec(a: &Array2<f64>, b: &Array2<f64>, i: usize, j: usize) -> f64 {
            let d = euclid(a.row(i), b.row(j));
            if i == 0 && j == 0 {
                return d;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(rec(a, b, i - 1, j - 1));
            }
            if i > 0 {
                best = best.min(rec(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(rec(a, b, i, j - 1));
            }
            d + best
        }
        rec(a, b, a.nrows() - 1, b.nrows() - 1)
    }

    #[test]
    fn identical_sequences_cost_zero_diagonal() {
        let a = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let (path, cost) = dtw_align(&a, &a).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn expansion_costs_zero() {
        let a = array![[1.0, 2.0]];
        let b = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let (path, cost) = dtw_align(&a, &b).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.len(), 3);
        assert_eq!(path.first(), Some(&(0, 0)));
        assert_eq!(path.last(), Some(&(0, 2)));
    }

    #[test]
    fn matches_exhaustive_oracle_on_short_sequences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=5);
            let a = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
            let b = Array2::from_shape_fn((m, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
            let (_, cost) = dtw_align(&a, &b).unwrap();
            let oracle = dtw_cost_oracle(&a, &b);
            assert!((cost - oracle).abs() < 1e-9, "{cost} vs {oracle}");
        }
    }

    #[test]
    fn cost_bounded_by_diagonal_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let a = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>());
        let b = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>());
        let (_, cost) = dtw_align(&a, &b).unwrap();
        let diag: f64 = (0..6).map(|i| euclid(a.row(i), b.row(i))).sum();
        assert!(cost <= diag + 1e-12);
    }

    #[test]
    fn path_is_monotone_and_anchored() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let a = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>());
        let b = Array2::from_shape_fn((7, 2), |_| rng.random::<f64>());
        let (path, _) = dtw_align(&a, &b).unwrap();
        assert_eq!(path.first(), Some(&(0, 0)));
        assert_eq!(path.last(), Some(&(4, 6)));
        for w in path.windows(2) {
            let (di, dj) = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
            assert!(matches!((di, dj), (0, 1) | (1, 0) | (1, 1)));
        }
    }

    #[test]
    fn empty_input_errors() {
        let a = Array2::<f64>::zeros((0, 2));
        let b = Array2::<f64>::zeros((3, 2));
        assert!(dtw_align(&a, &b).is_err());
    }
}
