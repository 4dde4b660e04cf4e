use crate::error::{NastError, Result};
use crate::numeric::kernels;
use crate::vocab::{TokenId, BLANK};

/// Length-T sequence over the blank-extended vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alignment(Vec<TokenId>);

impl Alignment {
    pub fn new(symbols: Vec<TokenId>) -> Self {
        Self(symbols)
    }

    pub fn as_slice(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn collapse(&self) -> Vec<TokenId> {
        super::collapse(&self.0)
    }

    /// Probability under a posterior, in log space.
    pub fn log_prob(&self, p: &AlignmentPosterior) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(t, &v)| p.log_prob(t, v))
            .sum()
    }
}

impl From<Vec<TokenId>> for Alignment {
    fn from(v: Vec<TokenId>) -> Self {
        Self(v)
    }
}

/// Decoding geometry attached to a posterior: chunk upsample ratio, chunk wait and
/// source length. Frames always equal `lambda * src_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PosteriorMeta {
    pub lambda: usize,
    pub k: usize,
    pub src_len: usize,
}

impl PosteriorMeta {
    /// Geometry with one frame per source token (λ = 1, k = 0).
    pub fn unit(frames: usize) -> Self {
        Self {
            lambda: 1,
            k: 0,
            src_len: frames,
        }
    }
}

const ROW_TOLERANCE: f64 = 1e-5;

/// `T × |V|` log-probabilities, one categorical distribution per alignment position.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentPosterior {
    log_probs: Vec<f64>,
    frames: usize,
    vocab: usize,
    meta: PosteriorMeta,
}

impl AlignmentPosterior {
    pub fn new(log_probs: Vec<f64>, vocab: usize, meta: PosteriorMeta) -> Result<Self> {
        if vocab < 2 {
            return Err(NastError::contract("posterior needs blank plus at least one token"));
        }
        if log_probs.len() % vocab != 0 {
            return Err(NastError::contract(format!(
                "{} log-probabilities do not form rows of width {vocab}",
                log_probs.len()
            )));
        }
        let frames = log_probs.len() / vocab;
        if meta.lambda == 0 || frames != meta.lambda * meta.src_len {
            return Err(NastError::contract(format!(
                "{frames} frames inconsistent with lambda {} and source length {}",
                meta.lambda, meta.src_len
            )));
        }
        for (t, row) in log_probs.chunks(vocab).enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(NastError::contract(format!("row {t} has invalid entries")));
            }
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            if (z.ln()).abs() > ROW_TOLERANCE {
                return Err(NastError::contract(format!(
                    "row {t} is not normalized (log-sum {})",
                    z.ln()
                )));
            }
        }
        Ok(Self {
            log_probs,
            frames,
            vocab,
            meta,
        })
    }

    /// Row-wise log-softmax of unnormalized scores.
    pub fn from_logits(logits: &[f64], vocab: usize, meta: PosteriorMeta) -> Result<Self> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NastError::contract("non-finite logits"));
        }
        Self::new(kernels::log_softmax_rows(logits, vocab), vocab, meta)
    }

    /// Exact logs of the given probabilities (zeros become `−∞`).
    pub fn from_probs(probs: &[f64], vocab: usize, meta: PosteriorMeta) -> Result<Self> {
        if probs.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(NastError::contract("probabilities outside [0, 1]"));
        }
        Self::new(probs.iter().map(|p| p.ln()).collect(), vocab, meta)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn meta(&self) -> PosteriorMeta {
        self.meta
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.log_probs[t * self.vocab..(t + 1) * self.vocab]
    }

    #[inline]
    pub fn log_prob(&self, t: usize, v: TokenId) -> f64 {
        self.log_probs[t * self.vocab + v as usize]
    }

    #[inline]
    pub fn prob(&self, t: usize, v: TokenId) -> f64 {
        self.log_prob(t, v).exp()
    }

    /// Per-position argmax (first maximum wins).
    pub fn argmax_alignment(&self) -> Alignment {
        let ids = (0..self.frames)
            .map(|t| {
                let row = self.row(t);
                let mut best = 0;
                for (v, &lp) in row.iter().enumerate() {
                    if lp > row[best] {
                        best = v;
                    }
                }
                best as TokenId
            })
            .collect();
        Alignment(ids)
    }

    pub(crate) fn check_target(&self, y: &[TokenId]) -> Result<()> {
        for &tok in y {
            if tok == BLANK {
                return Err(NastError::contract("target contains the blank symbol"));
            }
            if tok as usize >= self.vocab {
                return Err(NastError::contract(format!(
                    "token id {tok} outside vocabulary of size {}",
                    self.vocab
                )));
            }
        }
        Ok(())
    }
}

/// Chains a gradient with respect to log-probabilities back to the logits they were
/// normalized from: `dz = g − softmax(z) · Σ g` per row.
pub fn log_softmax_backward(log_probs: &[f64], grad: &[f64], vocab: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(grad.len());
    for (lp, g) in log_probs.chunks(vocab).zip(grad.chunks(vocab)) {
        let total: f64 = g.iter().sum();
        out.extend(lp.iter().zip(g).map(|(&l, &gv)| gv - l.exp() * total));
    }
    out
}
