//! Linear-chain CRF over the five labels.
//!
//! A path `y` over emissions `e` scores
//! `start[y0] + sum_i e[i, y_i] + sum_i trans[y_i, y_{i+1}] + end[y_last]`.
//! Forbidden moves get [`MASK_PENALTY`] added, which keeps every quantity
//! finite while removing those paths from the partition function.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::label::{LabelTag, NUM_LABELS};

const K: usize = NUM_LABELS;

/// Additive score for a masked transition.
pub const MASK_PENALTY: f64 = -1e30;

/// Per-token label scores, `len` rows of [`NUM_LABELS`] columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionScores {
    len: usize,
    data: Vec<f64>,
}

impl EmissionScores {
    pub fn zeros(len: usize) -> Self {
        EmissionScores {
            len,
            data: vec![0.0; len * K],
        }
    }

    pub fn from_rows(rows: &[[f64; K]]) -> Self {
        EmissionScores {
            len: rows.len(),
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_vec(len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * K {
            return Err(Error::Dimension(format!(
                "emission buffer has {} values, expected {}",
                data.len(),
                len * K
            )));
        }
        Ok(EmissionScores { len, data })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * K + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * K..(i + 1) * K]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * K..(i + 1) * K]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Which start, transition and end moves are permitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionMask {
    pub start: [bool; K],
    pub trans: [[bool; K]; K],
    pub end: [bool; K],
}

impl TransitionMask {
    pub fn allow_all() -> Self {
        TransitionMask {
            start: [true; K],
            trans: [[true; K]; K],
            end: [true; K],
        }
    }
}

/// The BIO constraint: no `I-X` at the start, after `O`, or after a
/// different entity type. Any label may end a query.
pub fn build_bio_mask() -> TransitionMask {
    let mut mask = TransitionMask::allow_all();
    for to in LabelTag::ALL {
        mask.start[to.index()] = !to.is_inside();
        for from in LabelTag::ALL {
            mask.trans[from.index()][to.index()] = from.may_precede(to);
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub start: [f64; K],
    /// `trans[from][to]`.
    pub trans: [[f64; K]; K],
    pub end: [f64; K],
    pub mask: TransitionMask,
}

impl TransitionMatrix {
    pub fn zeros(mask: TransitionMask) -> Self {
        TransitionMatrix {
            start: [0.0; K],
            trans: [[0.0; K]; K],
            end: [0.0; K],
            mask,
        }
    }

    #[inline]
    fn start_eff(&self, k: usize) -> f64 {
        self.start[k] + if self.mask.start[k] { 0.0 } else { MASK_PENALTY }
    }

    #[inline]
    fn trans_eff(&self, j: usize, k: usize) -> f64 {
        self.trans[j][k] + if self.mask.trans[j][k] { 0.0 } else { MASK_PENALTY }
    }

    #[inline]
    fn end_eff(&self, k: usize) -> f64 {
        self.end[k] + if self.mask.end[k] { 0.0 } else { MASK_PENALTY }
    }

    /// Index of the first move in `labels` that the mask forbids, if any.
    /// Index `labels.len()` denotes the end move.
    pub fn first_violation(&self, labels: &[LabelTag]) -> Option<usize> {
        let first = labels.first()?;
        if !self.mask.start[first.index()] {
            return Some(0);
        }
        for (i, w) in labels.windows(2).enumerate() {
            if !self.mask.trans[w[0].index()][w[1].index()] {
                return Some(i + 1);
            }
        }
        let last = labels[labels.len() - 1];
        (!self.mask.end[last.index()]).then_some(labels.len())
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn check_lengths(e: &EmissionScores, labels: &[LabelTag]) -> Result<()> {
    if e.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "emissions and labels",
            left: e.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(())
}

/// Unnormalized path score. Paths crossing a masked move score `-inf`.
pub fn sequence_score(e: &EmissionScores, t: &TransitionMatrix, labels: &[LabelTag]) -> Result<f64> {
    check_lengths(e, labels)?;
    if t.first_violation(labels).is_some() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut score = t.start[labels[0].index()];
    for (i, y) in labels.iter().enumerate() {
        score += e.get(i, y.index());
    }
    for w in labels.windows(2) {
        score += t.trans[w[0].index()][w[1].index()];
    }
    Ok(score + t.end[labels[labels.len() - 1].index()])
}

/// Forward log-scores: `alpha[i][k]` is the log-sum over prefixes ending in `k` at `i`.
fn forward(e: &EmissionScores, t: &TransitionMatrix) -> Vec<[f64; K]> {
    let mut alpha = vec![[0.0; K]; e.len()];
    for k in 0..K {
        alpha[0][k] = t.start_eff(k) + e.get(0, k);
    }
    let mut buf = [0.0; K];
    for i in 1..e.len() {
        for k in 0..K {
            for j in 0..K {
                buf[j] = alpha[i - 1][j] + t.trans_eff(j, k);
            }
            alpha[i][k] = log_sum_exp(&buf) + e.get(i, k);
        }
    }
    alpha
}

/// Backward log-scores: `beta[i][k]` is the log-sum over suffixes after `k` at `i`.
fn backward(e: &EmissionScores, t: &TransitionMatrix) -> Vec<[f64; K]> {
    let n = e.len();
    let mut beta = vec![[0.0; K]; n];
    for k in 0..K {
        beta[n - 1][k] = t.end_eff(k);
    }
    let mut buf = [0.0; K];
    for i in (0..n - 1).rev() {
        for j in 0..K {
            for k in 0..K {
                buf[k] = t.trans_eff(j, k) + e.get(i + 1, k) + beta[i + 1][k];
            }
            beta[i][j] = log_sum_exp(&buf);
        }
    }
    beta
}

fn partition_from_alpha(alpha: &[[f64; K]], t: &TransitionMatrix) -> f64 {
    let last = &alpha[alpha.len() - 1];
    let terms: [f64; K] = std::array::from_fn(|k| last[k] + t.end_eff(k));
    log_sum_exp(&terms)
}

/// Log of the sum of `exp(score)` over all permitted paths. Returns `-inf`
/// for zero-length emissions.
pub fn log_partition(e: &EmissionScores, t: &TransitionMatrix) -> f64 {
    if e.is_empty() {
        return f64::NEG_INFINITY;
    }
    partition_from_alpha(&forward(e, t), t)
}

/// Gradients of the negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGrads {
    pub emissions: EmissionScores,
    pub start: [f64; K],
    pub trans: [[f64; K]; K],
    pub end: [f64; K],
}

/// Negative log-likelihood of `gold` and its gradients: expected feature
/// counts under the model minus the gold counts. Masked parameters get
/// zero gradient.
pub fn crf_nll_grad(e: &EmissionScores, t: &TransitionMatrix, gold: &[LabelTag]) -> Result<(f64, CrfGrads)> {
    check_lengths(e, gold)?;
    if let Some(index) = t.first_violation(gold) {
        return Err(Error::MaskViolation { index });
    }
    let n = e.len();
    let alpha = forward(e, t);
    let beta = backward(e, t);
    let log_z = partition_from_alpha(&alpha, t);
    let loss = (log_z - sequence_score(e, t, gold)?).max(0.0);

    let mut g = CrfGrads {
        emissions: EmissionScores::zeros(n),
        start: [0.0; K],
        trans: [[0.0; K]; K],
        end: [0.0; K],
    };
    for i in 0..n {
        let row = g.emissions.row_mut(i);
        for k in 0..K {
            row[k] = (alpha[i][k] + beta[i][k] - log_z).exp();
        }
    }
    for k in 0..K {
        if t.mask.start[k] {
            g.start[k] = g.emissions.get(0, k);
        }
        if t.mask.end[k] {
            g.end[k] = g.emissions.get(n - 1, k);
        }
    }
    for i in 0..n.saturating_sub(1) {
        for j in 0..K {
            for k in 0..K {
                if t.mask.trans[j][k] {
                    g.trans[j][k] += (alpha[i][j] + t.trans_eff(j, k) + e.get(i + 1, k) + beta[i + 1][k] - log_z).exp();
                }
            }
        }
    }

    for (i, y) in gold.iter().enumerate() {
        g.emissions.row_mut(i)[y.index()] -= 1.0;
    }
    g.start[gold[0].index()] -= 1.0;
    g.end[gold[n - 1].index()] -= 1.0;
    for w in gold.windows(2) {
        g.trans[w[0].index()][w[1].index()] -= 1.0;
    }
    Ok((loss, g))
}

/// Highest-scoring permitted path and its score. Ties go to the lower label
/// index at every backtracking step, so all-zero scores under the BIO mask
/// decode to all `O`.
pub fn viterbi_decode(e: &EmissionScores, t: &TransitionMatrix) -> (Vec<LabelTag>, f64) {
    let n = e.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta = [0.0; K];
    for (k, d) in delta.iter_mut().enumerate() {
        *d = t.start_eff(k) + e.get(0, k);
    }
    let mut back = vec![[0usize; K]; n];
    for i in 1..n {
        let mut next = [0.0; K];
        for k in 0..K {
            let mut best = 0;
            let mut best_score = delta[0] + t.trans_eff(0, k);
            for j in 1..K {
                let s = delta[j] + t.trans_eff(j, k);
                if s > best_score {
                    best_score = s;
                    best = j;
                }
            }
            back[i][k] = best;
            next[k] = best_score + e.get(i, k);
        }
        delta = next;
    }
    let mut last = 0;
    let mut best_score = delta[0] + t.end_eff(0);
    for k in 1..K {
        let s = delta[k] + t.end_eff(k);
        if s > best_score {
            best_score = s;
            last = k;
        }
    }
    let mut path = vec![LabelTag::O; n];
    path[n - 1] = LabelTag::from_index(last);
    for i in (1..n).rev() {
        last = back[i][last];
        path[i - 1] = LabelTag::from_index(last);
    }
    (path, best_score)
}
