//! Reservation probabilities and the expected Average Lagging estimator.

use super::posterior::AlignmentPosterior;
use crate::error::{NastError, Result};
use crate::model::position_moment;
use crate::vocab::BLANK;

/// Floor on the expected token count in the estimator's denominator.
pub const EPS_DIV: f64 = 1e-6;

/// Probability that each frame survives collapsing: not blank and not a repeat
/// of the previous frame. The first frame has no predecessor.
pub fn reservation_probs(p: &AlignmentPosterior) -> Vec<f64> {
    let vocab = p.vocab_size();
    (0..p.frames())
        .map(|t| {
            let mut r = 1.0 - p.prob(t, BLANK);
            if t > 0 {
                for v in 1..vocab {
                    r -= p.prob(t, v as u32) * p.prob(t - 1, v as u32);
                }
            }
            // Exact value lies in [0, 1]; clamp only absorbs rounding.
            r.clamp(0.0, 1.0)
        })
        .collect()
}

/// The two expectations the estimator is built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyTerms {
    /// `E[τ] = Σ p(𝟙(aᵢ))` over frames before the last source token.
    pub expected_tokens: f64,
    /// `E[Σ m(i) 𝟙(aᵢ)]` over the same frames.
    pub expected_moment_sum: f64,
}

fn check_src(p: &AlignmentPosterior) -> Result<()> {
    let src = p.meta().src_len;
    if src < 2 {
        return Err(NastError::DegenerateInput(format!(
            "expected lagging needs a source of at least two tokens, got {src}"
        )));
    }
    Ok(())
}

/// Number of leading frames whose tokens count towards the lagging: every chunk
/// except the last.
fn counted_frames(p: &AlignmentPosterior) -> usize {
    let m = p.meta();
    (m.src_len - 1) * m.lambda
}

fn moments(p: &AlignmentPosterior) -> Vec<f64> {
    let m = p.meta();
    (1..=counted_frames(p))
        .map(|i| position_moment(i, m.lambda, m.k, m.src_len) as f64)
        .collect()
}

pub fn latency_terms(p: &AlignmentPosterior) -> Result<LatencyTerms> {
    check_src(p)?;
    let r = reservation_probs(p);
    let mut terms = LatencyTerms {
        expected_tokens: 0.0,
        expected_moment_sum: 0.0,
    };
    for (ri, mi) in r.iter().zip(moments(p)) {
        terms.expected_tokens += ri;
        terms.expected_moment_sum += mi * ri;
    }
    Ok(terms)
}

/// `(E[Σ m·𝟙] − (|x|/2)(E[τ] − 1)) / max(E[τ], ε)`.
pub fn al_from_terms(terms: LatencyTerms, src_len: usize) -> f64 {
    let half = src_len as f64 / 2.0;
    (terms.expected_moment_sum - half * (terms.expected_tokens - 1.0)) / terms.expected_tokens.max(EPS_DIV)
}

pub fn expected_al(p: &AlignmentPosterior) -> Result<f64> {
    Ok(al_from_terms(latency_terms(p)?, p.meta().src_len))
}

/// Expected AL and its gradient with respect to the log-probability matrix.
pub fn expected_al_grad(p: &AlignmentPosterior) -> Result<(f64, Vec<f64>)> {
    check_src(p)?;
    let terms = latency_terms(p)?;
    let src_len = p.meta().src_len;
    let value = al_from_terms(terms, src_len);
    let half = src_len as f64 / 2.0;
    let e = terms.expected_tokens;
    let numerator = terms.expected_moment_sum - half * (e - 1.0);
    let moments = moments(p);
    // ∂AL/∂rᵢ for each counted frame.
    let d_r: Vec<f64> = moments
        .iter()
        .map(|&m| {
            if e > EPS_DIV {
                (m - half) / e - numerator / (e * e)
            } else {
                (m - half) / EPS_DIV
            }
        })
        .collect();
    Ok((value, reservation_backward(p, &d_r)))
}

/// Chains `∂L/∂rᵢ` (for the first `d_r.len()` frames) to log-probabilities.
fn reservation_backward(p: &AlignmentPosterior, d_r: &[f64]) -> Vec<f64> {
    let vocab = p.vocab_size();
    let mut grad = vec![0.0; p.frames() * vocab];
    for (t, &g) in d_r.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        // ∂rₜ/∂pₜ(ε) = −1, ∂rₜ/∂pₜ(v) = −pₜ₋₁(v), ∂rₜ/∂pₜ₋₁(v) = −pₜ(v).
        grad[t * vocab] += -g * p.prob(t, BLANK);
        if t > 0 {
            for v in 1..vocab {
                let (cur, prev) = (p.prob(t, v as u32), p.prob(t - 1, v as u32));
                grad[t * vocab + v] += -g * prev * cur;
                grad[(t - 1) * vocab + v] += -g * cur * prev;
            }
        }
    }
    grad
}

/// `max(AL(θ; x), l_min)`.
pub fn latency_loss(p: &AlignmentPosterior, l_min: f64) -> Result<f64> {
    Ok(expected_al(p)?.max(l_min))
}

/// Latency loss and gradient; the gradient vanishes where the threshold binds.
pub fn latency_loss_grad(p: &AlignmentPosterior, l_min: f64) -> Result<(f64, Vec<f64>)> {
    let (al, grad) = expected_al_grad(p)?;
    if al > l_min {
        Ok((al, grad))
    } else {
        Ok((l_min, vec![0.0; grad.len()]))
    }
}
