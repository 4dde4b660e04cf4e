//! CTC marginal likelihood over the `2|y|+1`-state alignment lattice.

use super::posterior::AlignmentPosterior;
use crate::error::{NastError, Result};
use crate::numeric::{lse, lse2};
use crate::vocab::{TokenId, BLANK};

/// Smallest number of frames that can collapse to `y`: one per token plus a
/// separating blank between equal neighbours.
pub fn min_frames(y: &[TokenId]) -> usize {
    y.len() + y.windows(2).filter(|w| w[0] == w[1]).count()
}

pub(crate) struct Lattice {
    labels: Vec<TokenId>,
}

impl Lattice {
    pub(crate) fn new(y: &[TokenId]) -> Self {
        let mut labels = Vec::with_capacity(2 * y.len() + 1);
        labels.push(BLANK);
        for &tok in y {
            labels.push(tok);
            labels.push(BLANK);
        }
        Self { labels }
    }

    pub(crate) fn states(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn label(&self, s: usize) -> TokenId {
        self.labels[s]
    }

    /// Whether state `s` may be entered directly from `s − 2`.
    pub(crate) fn can_skip(&self, s: usize) -> bool {
        s >= 2 && self.labels[s] != BLANK && self.labels[s] != self.labels[s - 2]
    }

    /// Accepting states at the last frame: trailing blank first, then the last token.
    pub(crate) fn finals(&self) -> Vec<usize> {
        let s = self.labels.len();
        if s == 1 {
            vec![0]
        } else {
            vec![s - 1, s - 2]
        }
    }
}

fn forward(lat: &Lattice, p: &AlignmentPosterior) -> Vec<f64> {
    let (t_len, s_len) = (p.frames(), lat.states());
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s_len];
    alpha[0] = p.log_prob(0, lat.label(0));
    if s_len > 1 {
        alpha[1] = p.log_prob(0, lat.label(1));
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse2(acc, prev[s - 1]);
            }
            if lat.can_skip(s) {
                acc = lse2(acc, prev[s - 2]);
            }
            cur[s] = if acc == f64::NEG_INFINITY {
                acc
            } else {
                acc + p.log_prob(t, lat.label(s))
            };
        }
    }
    alpha
}

fn backward(lat: &Lattice, p: &AlignmentPosterior) -> Vec<f64> {
    let (t_len, s_len) = (p.frames(), lat.states());
    let mut beta = vec![f64::NEG_INFINITY; t_len * s_len];
    let last = (t_len - 1) * s_len;
    for s in lat.finals() {
        beta[last + s] = p.log_prob(t_len - 1, lat.label(s));
    }
    for t in (0..t_len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let next = &next[..s_len];
        for s in 0..s_len {
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = lse2(acc, next[s + 1]);
            }
            if s + 2 < s_len && lat.can_skip(s + 2) {
                acc = lse2(acc, next[s + 2]);
            }
            cur[s] = if acc == f64::NEG_INFINITY {
                acc
            } else {
                acc + p.log_prob(t, lat.label(s))
            };
        }
    }
    beta
}

fn total(lat: &Lattice, alpha: &[f64], frames: usize) -> f64 {
    let s_len = lat.states();
    let last = &alpha[(frames - 1) * s_len..];
    let ends: Vec<f64> = lat.finals().into_iter().map(|s| last[s]).collect();
    lse(&ends)
}

/// `log p(y)` summed over every alignment that collapses to `y`; `−∞` when none exists.
pub fn ctc_log_prob(y: &[TokenId], p: &AlignmentPosterior) -> Result<f64> {
    p.check_target(y)?;
    if p.frames() == 0 {
        return Ok(if y.is_empty() { 0.0 } else { f64::NEG_INFINITY });
    }
    let lat = Lattice::new(y);
    Ok(total(&lat, &forward(&lat, p), p.frames()))
}

/// `log p(y)` and its gradient with respect to every entry of the log-probability matrix.
pub fn ctc_log_prob_grad(y: &[TokenId], p: &AlignmentPosterior) -> Result<(f64, Vec<f64>)> {
    p.check_target(y)?;
    if p.frames() < min_frames(y) || p.frames() == 0 {
        return Err(NastError::Infeasible {
            target_len: y.len(),
            frames: p.frames(),
        });
    }
    let lat = Lattice::new(y);
    let alpha = forward(&lat, p);
    let beta = backward(&lat, p);
    let log_z = total(&lat, &alpha, p.frames());
    let (s_len, vocab) = (lat.states(), p.vocab_size());
    let mut grad = vec![0.0; p.frames() * vocab];
    for t in 0..p.frames() {
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                continue;
            }
            let label = lat.label(s);
            let occupancy = (a + b - p.log_prob(t, label) - log_z).exp();
            grad[t * vocab + label as usize] += occupancy;
        }
    }
    Ok((log_z, grad))
}
