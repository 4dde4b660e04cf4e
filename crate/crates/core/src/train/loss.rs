//! Sentence-level objectives over an alignment posterior, and their
//! back-propagation through the model.

use rand_chacha::ChaCha8Rng;

use crate::error::{NastError, Result};
use crate::lattice::{ctc_log_prob_grad, expected_al_grad, nmla_loss_grad, AlignmentPosterior};
use crate::model::{posterior_from_tensor, ForwardOptions, NastModel};
use crate::numeric::{Scalar, Tape, Tensor};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `−log p(y|x)` plus `smoothing` times the mean KL(uniform ‖ p_t).
    Ctc { smoothing: f64 },
    /// NMLA, plus `max(AL, l_min)` when `latency_floor` is set.
    Nmla { latency_floor: Option<f64> },
}

/// Components of one sentence's (or a batch mean's) loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// CTC negative log-likelihood or NMLA.
    pub main: f64,
    pub smoothing: f64,
    pub latency: f64,
    /// Expected AL behind the latency term (0 when the term is inactive).
    pub expected_al: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.main += other.main;
        self.smoothing += other.smoothing;
        self.latency += other.latency;
        self.expected_al += other.expected_al;
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.total *= c;
        self.main *= c;
        self.smoothing *= c;
        self.latency *= c;
        self.expected_al *= c;
        self
    }
}

/// Mean over frames of KL(uniform ‖ p_t) and its gradient with respect to the log-probabilities.
pub fn uniform_kl(p: &AlignmentPosterior) -> (f64, Vec<f64>) {
    let v = p.vocab_size() as f64;
    let t = p.frames() as f64;
    let sum: f64 = p.log_probs().iter().sum();
    let value = -v.ln() - sum / (t * v);
    (value, vec![-1.0 / (t * v); p.log_probs().len()])
}

/// Loss of target `y` under `p` and its gradient with respect to `p`'s log-probabilities.
///
/// NMLA needs at least one reference bigram, so targets shorter than two tokens
/// fall back to the CTC likelihood.
pub fn posterior_loss(objective: Objective, y: &[TokenId], p: &AlignmentPosterior) -> Result<(LossBreakdown, Vec<f64>)> {
    match objective {
        Objective::Ctc { smoothing } => {
            let (log_z, occ) = ctc_log_prob_grad(y, p)?;
            let mut grad: Vec<f64> = occ.iter().map(|g| -g).collect();
            let mut out = LossBreakdown {
                main: -log_z,
                ..Default::default()
            };
            if smoothing > 0.0 {
                let (kl, kl_grad) = uniform_kl(p);
                out.smoothing = kl;
                for (g, k) in grad.iter_mut().zip(kl_grad) {
                    *g += smoothing * k;
                }
            }
            out.total = out.main + smoothing * out.smoothing;
            Ok((out, grad))
        }
        Objective::Nmla { latency_floor } => {
            let (main, mut grad) = if y.len() < 2 {
                let (log_z, occ) = ctc_log_prob_grad(y, p)?;
                (-log_z, occ.iter().map(|g| -g).collect())
            } else {
                nmla_loss_grad(y, p)?
            };
            let mut out = LossBreakdown {
                main,
                ..Default::default()
            };
            // Expected lagging needs at least two source tokens.
            if let Some(l_min) = latency_floor.filter(|_| p.meta().src_len >= 2) {
                let (al, al_grad) = expected_al_grad(p)?;
                out.expected_al = al;
                out.latency = al.max(l_min);
                if al > l_min {
                    for (g, l) in grad.iter_mut().zip(al_grad) {
                        *g += l;
                    }
                }
            }
            out.total = out.main + out.latency;
            Ok((out, grad))
        }
    }
}

/// Inputs of one training example's forward/backward pass.
pub struct ExampleInput<'a> {
    pub source: &'a [TokenId],
    pub target: &'a [TokenId],
    pub k: usize,
    /// Glancing-modified decoder inputs.
    pub decoder_ids: Option<&'a [TokenId]>,
    pub dropout_rng: Option<&'a mut ChaCha8Rng>,
}

/// Loss of one example and the gradient for every parameter, in parameter order.
pub fn example_loss_grad<T: Scalar>(
    model: &NastModel<T>,
    objective: Objective,
    input: ExampleInput<'_>,
) -> Result<(LossBreakdown, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let pass = model.forward_on_tape(
        &mut tape,
        input.source,
        ForwardOptions {
            k: input.k,
            decoder_ids: input.decoder_ids,
            dropout_rng: input.dropout_rng,
            requires_grad: true,
        },
    )?;
    let lp = tape.value(pass.log_probs);
    let posterior = posterior_from_tensor(lp, model.config().lambda, input.k, input.source.len())?;
    let (loss, grad) = posterior_loss(objective, input.target, &posterior)?;
    if !loss.total.is_finite() {
        return Err(NastError::contract(format!("non-finite loss {}", loss.total)));
    }
    let seed = Tensor::from_parts(
        lp.shape().to_vec(),
        grad.into_iter().map(T::from_f64_lossy).collect(),
    );
    let mut grads = tape.backward(pass.log_probs, seed);
    let out = pass
        .param_vars
        .iter()
        .zip(model.params().tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((loss, out))
}

/// Loss of one example without gradients.
pub fn example_loss<T: Scalar>(
    model: &NastModel<T>,
    objective: Objective,
    source: &[TokenId],
    target: &[TokenId],
    k: usize,
) -> Result<LossBreakdown> {
    let lp = model.log_probs(source, k)?;
    let posterior = posterior_from_tensor(&lp, model.config().lambda, k, source.len())?;
    Ok(posterior_loss(objective, target, &posterior)?.0)
}
