//! Connectionist Temporal Classification: log-space loss, analytic
//! gradient, and greedy/prefix-beam decoders.
//!
//! The token inventory is the 26 uppercase letters plus space, with blank
//! at index 0. Loss is the per-sequence negative log-likelihood; batch
//! losses are averaged by callers.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Blank token index.
pub const BLANK: usize = 0;
/// Letters + space + blank.
pub const VOCAB_SIZE: usize = 28;
const SPACE_TOKEN: usize = 27;

pub fn char_to_token(c: char) -> Option<usize> {
    match c {
        'A'..='Z' => Some(c as usize - 'A' as usize + 1),
        ' ' => Some(SPACE_TOKEN),
        _ => None,
    }
}

pub fn token_to_char(t: usize) -> Option<char> {
    match t {
        1..=26 => Some((b'A' + (t - 1) as u8) as char),
        SPACE_TOKEN => Some(' '),
        _ => None,
    }
}

/// Blank-free target sequence over the letter/space alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn from_text(text: &str) -> Result<Self> {
        let tokens = text
            .chars()
            .map(|c| {
                char_to_token(c).ok_or_else(|| {
                    Error::InvalidArgument(format!("character {c:?} outside A-Z/space alphabet"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if tokens.is_empty() {
            return Err(Error::EmptyInput("ctc target"));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn from_tokens(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("ctc target"));
        }
        if tokens.iter().any(|&t| t == BLANK || t >= VOCAB_SIZE) {
            return Err(Error::InvalidArgument("target contains blank or out-of-vocab token".into()));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn to_text(&self) -> String {
        self.0.iter().filter_map(|&t| token_to_char(t)).collect()
    }
}

pub fn tokens_to_text(tokens: &[usize]) -> String {
    tokens.iter().filter_map(|&t| token_to_char(t)).collect()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Blank-interleaved expansion `[b, t1, b, t2, ..., b]`.
fn expand(target: &[usize]) -> Vec<usize> {
    let mut l = Vec::with_capacity(2 * target.len() + 1);
    l.push(BLANK);
    for &t in target {
        l.push(t);
        l.push(BLANK);
    }
    l
}

/// Minimum frame count for a feasible alignment: one frame per label plus
/// one separating blank between equal neighbors.
fn min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

fn check_feasible(frames: usize, target: &[usize]) -> Result<()> {
    let needed = min_frames(target);
    if frames < needed {
        return Err(Error::InfeasibleAlignment { needed, got: frames });
    }
    Ok(())
}

fn forward_alphas(lp: &Array2<f64>, l: &[usize]) -> Array2<f64> {
    let frames = lp.nrows();
    let states = l.len();
    let mut alpha = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    alpha[[0, 0]] = lp[[0, l[0]]];
    if states > 1 {
        alpha[[0, 1]] = lp[[0, l[1]]];
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if s >= 2 && l[s] != BLANK && l[s] != l[s - 2] {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + lp[[t, l[s]]];
        }
    }
    alpha
}

/// Negative log probability of all valid alignments of `target` under the
/// per-frame softmax of `logits` (`T x VOCAB`).
pub fn ctc_loss(logits: &Array2<f64>, target: &TokenSequence) -> Result<f64> {
    check_feasible(logits.nrows(), target.tokens())?;
    let lp = log_softmax(logits);
    let l = expand(target.tokens());
    let alpha = forward_alphas(&lp, &l);
    let t_last = logits.nrows() - 1;
    let s_last = l.len() - 1;
    let mut log_z = alpha[[t_last, s_last]];
    if s_last >= 1 {
        log_z = log_add(log_z, alpha[[t_last, s_last - 1]]);
    }
    Ok(-log_z)
}

/// Loss plus its exact gradient with respect to the raw logits:
/// `softmax - gamma`, where gamma sums state posteriors per label.
pub fn ctc_loss_grad(logits: &Array2<f64>, target: &TokenSequence) -> Result<(f64, Array2<f64>)> {
    check_feasible(logits.nrows(), target.tokens())?;
    let frames = logits.nrows();
    let vocab = logits.ncols();
    let lp = log_softmax(logits);
    let l = expand(target.tokens());
    let states = l.len();

    let alpha = forward_alphas(&lp, &l);

    // Suffix probabilities including the emission at t.
    let mut beta = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    beta[[frames - 1, states - 1]] = lp[[frames - 1, l[states - 1]]];
    if states > 1 {
        beta[[frames - 1, states - 2]] = lp[[frames - 1, l[states - 2]]];
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut acc = beta[[t + 1, s]];
            if s + 1 < states {
                acc = log_add(acc, beta[[t + 1, s + 1]]);
            }
            if s + 2 < states && l[s + 2] != BLANK && l[s + 2] != l[s] {
                acc = log_add(acc, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = acc + lp[[t, l[s]]];
        }
    }

    let mut log_z = alpha[[frames - 1, states - 1]];
    if states > 1 {
        log_z = log_add(log_z, alpha[[frames - 1, states - 2]]);
    }

    let mut grad = Array2::zeros((frames, vocab));
    for t in 0..frames {
        // gamma[v] = sum over states with label v of the state posterior.
        let mut gamma = vec![f64::NEG_INFINITY; vocab];
        for s in 0..states {
            let post = alpha[[t, s]] + beta[[t, s]] - lp[[t, l[s]]] - log_z;
            gamma[l[s]] = log_add(gamma[l[s]], post);
        }
        for v in 0..vocab {
            grad[[t, v]] = lp[[t, v]].exp() - gamma[v].exp();
        }
    }
    Ok((-log_z, grad))
}

/// Per-frame argmax, collapse repeats, drop blanks. Ties pick the lowest
/// index, so the result is deterministic.
pub fn ctc_greedy_decode(logits: &Array2<f64>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = BLANK;
    for row in logits.rows() {
        let mut best = 0usize;
        for (v, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = v;
            }
        }
        if best != BLANK && best != last {
            out.push(best);
        }
        last = best;
    }
    out
}

#[derive(Clone, Copy)]
struct PrefixScore {
    blank: f64,
    nonblank: f64,
}

impl PrefixScore {
    fn total(&self) -> f64 {
        log_add(self.blank, self.nonblank)
    }
}

impl Default for PrefixScore {
    fn default() -> Self {
        PrefixScore { blank: f64::NEG_INFINITY, nonblank: f64::NEG_INFINITY }
    }
}

/// Prefix beam search over collapsed label sequences.
///
/// Prefix probabilities are merged across alignments, so with a wide beam
/// the result is the exact maximum-probability label sequence. Width 1
/// degenerates to the greedy path decoder.
pub fn ctc_beam_decode(logits: &Array2<f64>, width: usize) -> Result<Vec<usize>> {
    if width < 1 {
        return Err(Error::InvalidArgument("beam width must be >= 1".into()));
    }
    if width == 1 {
        return Ok(ctc_greedy_decode(logits));
    }
    let lp = log_softmax(logits);
    let vocab = lp.ncols();

    let mut beams: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
    beams.insert(Vec::new(), PrefixScore { blank: 0.0, nonblank: f64::NEG_INFINITY });

    for t in 0..lp.nrows() {
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, score) in &beams {
            let total = score.total();
            // Extend with blank: prefix unchanged.
            {
                let e = next.entry(prefix.clone()).or_default();
                e.blank = log_add(e.blank, total + lp[[t, BLANK]]);
            }
            // Repeat the last symbol: merges into the same prefix.
            if let Some(&last) = prefix.last() {
                let e = next.entry(prefix.clone()).or_default();
                e.nonblank = log_add(e.nonblank, score.nonblank + lp[[t, last]]);
            }
            // Extend with each non-blank symbol.
            for v in 1..vocab {
                let mut ext = prefix.clone();
                ext.push(v);
                let base = if Some(&v) == prefix.last() {
                    // Needs a blank in between, so only the blank mass extends.
                    score.blank
                } else {
                    total
                };
                let e = next.entry(ext).or_default();
                e.nonblank = log_add(e.nonblank, base + lp[[t, v]]);
            }
        }
        // Prune: keep the `width` best prefixes, ties by lexicographic order.
        let mut items: Vec<(Vec<usize>, PrefixScore)> = next.into_iter().collect();
        items.sort_by(|a, b| {
            b.1.total()
                .partial_cmp(&a.1.total())
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        items.truncate(width);
        beams = items.into_iter().collect();
    }

    let best = beams
        .iter()
        .max_by(|a, b| {
            a.1.total()
                .partial_cmp(&b.1.total())
                .unwrap()
                .then_with(|| b.0.cmp(a.0))
        })
        .map(|(p, _)| p.clone())
        .unwrap_or_default();
    Ok(best)
}
