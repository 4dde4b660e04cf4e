//! Dense tensors, shared kernels, reverse-mode differentiation and gradient checking.

pub mod gradcheck;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_grouped, relative_error, GradLocation, GradReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};

use crate::error::{NastError, Result};

/// Probability floor applied before taking logs of categorical probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Shift-stable `log Σ exp(vᵢ)`. All-`−∞` input yields `−∞`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(NastError::contract("log_sum_exp of an empty vector"));
    }
    Ok(lse(values))
}

/// Unchecked [`log_sum_exp`] for internal hot loops.
#[inline]
pub(crate) fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(NastError::contract(format!("non-finite logit at index {i}")));
    }
    if logits.is_empty() {
        return Err(NastError::contract("softmax of an empty vector"));
    }
    let mut out = logits.to_vec();
    kernels::softmax_in_place(&mut out);
    Ok(out)
}

/// `ln(max(p, floor))`, keeping log-probabilities finite.
#[inline]
pub fn floored_ln(p: f64, floor: f64) -> f64 {
    p.max(floor).ln()
}
