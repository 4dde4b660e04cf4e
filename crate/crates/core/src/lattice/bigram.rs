//! Expected bigram counts of collapsed alignments and the bigram-F1 (NMLA) loss.

use std::collections::BTreeMap;

use super::posterior::AlignmentPosterior;
use crate::error::{NastError, Result};
use crate::vocab::{TokenId, BLANK};

pub type Bigram = (TokenId, TokenId);

#[derive(Clone, Debug, PartialEq)]
pub struct BigramEntry {
    pub bigram: Bigram,
    /// Occurrences in the reference.
    pub reference: u32,
    /// Expected occurrences in the collapsed model output.
    pub expected: f64,
}

/// Reference and expected counts for every distinct bigram of a target, ordered by bigram.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramTable {
    pub entries: Vec<BigramEntry>,
}

pub fn reference_bigrams(y: &[TokenId]) -> BTreeMap<Bigram, u32> {
    let mut counts = BTreeMap::new();
    for w in y.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    counts
}

fn check_bigram(g: Bigram, p: &AlignmentPosterior) -> Result<()> {
    if g.0 == BLANK || g.1 == BLANK {
        return Err(NastError::contract("bigram contains the blank symbol"));
    }
    let v = p.vocab_size() as TokenId;
    if g.0 >= v || g.1 >= v {
        return Err(NastError::contract(format!("bigram {g:?} outside vocabulary")));
    }
    Ok(())
}

/// Expected count of `g` as an adjacent pair in the collapsed alignment.
///
/// A collapsed adjacency `(g₁, g₂)` corresponds to exactly one frame pair `t < t′`
/// with `a_t = g₁`, `a_t′ = g₂` and only blanks strictly between (adjacent frames
/// only when `g₁ ≠ g₂`). The sum over such pairs is accumulated left to right with
/// `F(t′) = Σ_{t<t′} p_t(g₁) Π_{t<s<t′} p_s(ε)`, giving `O(T)` per bigram.
pub fn expected_bigram_count(g: Bigram, p: &AlignmentPosterior) -> Result<f64> {
    check_bigram(g, p)?;
    Ok(forward_count(g, p).0)
}

/// Returns the count and the `F` prefix sums used by the reverse pass.
fn forward_count(g: Bigram, p: &AlignmentPosterior) -> (f64, Vec<f64>) {
    let frames = p.frames();
    let mut f = vec![0.0; frames + 1];
    let mut count = 0.0;
    for t in 0..frames {
        let second = p.prob(t, g.1);
        count += second * gap_weight(g, p, &f, t);
        f[t + 1] = f[t] * p.prob(t, BLANK) + p.prob(t, g.0);
    }
    (count, f)
}

/// Mass of admissible left partners for a right partner at frame `t`.
#[inline]
fn gap_weight(g: Bigram, p: &AlignmentPosterior, f: &[f64], t: usize) -> f64 {
    if g.0 != g.1 {
        f[t]
    } else if t == 0 {
        0.0
    } else {
        // Equal tokens need at least one blank between them.
        f[t - 1] * p.prob(t - 1, BLANK)
    }
}

/// Adds `upstream · ∂count/∂log p` into `grad`.
fn backward_count(g: Bigram, p: &AlignmentPosterior, f: &[f64], upstream: f64, grad: &mut [f64]) {
    let frames = p.frames();
    let vocab = p.vocab_size();
    // Gradients with respect to probabilities; converted to log space at the end.
    let mut d_first = vec![0.0; frames];
    let mut d_second = vec![0.0; frames];
    let mut d_blank = vec![0.0; frames];
    let mut d_f = vec![0.0; frames + 1];
    for t in 0..frames {
        let second = p.prob(t, g.1);
        d_second[t] += upstream * gap_weight(g, p, f, t);
        if g.0 != g.1 {
            d_f[t] += upstream * second;
        } else if t > 0 {
            d_f[t - 1] += upstream * second * p.prob(t - 1, BLANK);
            d_blank[t - 1] += upstream * second * f[t - 1];
        }
    }
    for t in (0..frames).rev() {
        let carry = d_f[t + 1];
        if carry != 0.0 {
            d_f[t] += carry * p.prob(t, BLANK);
            d_blank[t] += carry * f[t];
            d_first[t] += carry;
        }
    }
    for t in 0..frames {
        let row = &mut grad[t * vocab..(t + 1) * vocab];
        row[g.0 as usize] += d_first[t] * p.prob(t, g.0);
        row[g.1 as usize] += d_second[t] * p.prob(t, g.1);
        row[BLANK as usize] += d_blank[t] * p.prob(t, BLANK);
    }
}

pub fn expected_bigram_counts(bigrams: &[Bigram], p: &AlignmentPosterior) -> Result<Vec<f64>> {
    bigrams.iter().map(|&g| expected_bigram_count(g, p)).collect()
}

impl BigramTable {
    pub fn build(y: &[TokenId], p: &AlignmentPosterior) -> Result<Self> {
        p.check_target(y)?;
        let entries = reference_bigrams(y)
            .into_iter()
            .map(|(bigram, reference)| {
                Ok(BigramEntry {
                    bigram,
                    reference,
                    expected: expected_bigram_count(bigram, p)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

fn check_nmla_target(y: &[TokenId], p: &AlignmentPosterior) -> Result<()> {
    p.check_target(y)?;
    if y.len() < 2 {
        return Err(NastError::DegenerateTarget(format!(
            "bigram loss needs at least two target tokens, got {}",
            y.len()
        )));
    }
    Ok(())
}

/// `−2 Σ min(C_g(y), C_g(θ)) / Σ (C_g(y) + C_g(θ))` over the bigrams of `y`.
pub fn nmla_loss(y: &[TokenId], p: &AlignmentPosterior) -> Result<f64> {
    check_nmla_target(y, p)?;
    let table = BigramTable::build(y, p)?;
    let (matched, total) = f1_terms(&table);
    Ok(-2.0 * matched / total)
}

fn f1_terms(table: &BigramTable) -> (f64, f64) {
    let mut matched = 0.0;
    let mut total = 0.0;
    for e in &table.entries {
        let r = f64::from(e.reference);
        matched += r.min(e.expected);
        total += r + e.expected;
    }
    (matched, total)
}

/// NMLA loss and its gradient with respect to the log-probability matrix.
///
/// Where `C_g(θ)` equals `C_g(y)` the `min` routes its gradient through the
/// expected count.
pub fn nmla_loss_grad(y: &[TokenId], p: &AlignmentPosterior) -> Result<(f64, Vec<f64>)> {
    check_nmla_target(y, p)?;
    let mut entries = Vec::new();
    let mut prefix = Vec::new();
    for (bigram, reference) in reference_bigrams(y) {
        let (expected, f) = forward_count(bigram, p);
        entries.push(BigramEntry {
            bigram,
            reference,
            expected,
        });
        prefix.push(f);
    }
    let table = BigramTable { entries };
    let (matched, total) = f1_terms(&table);
    let loss = -2.0 * matched / total;
    let mut grad = vec![0.0; p.frames() * p.vocab_size()];
    for (e, f) in table.entries.iter().zip(&prefix) {
        let through_min = if e.expected <= f64::from(e.reference) { 1.0 } else { 0.0 };
        let d_count = -2.0 * (through_min * total - matched) / (total * total);
        if d_count != 0.0 {
            backward_count(e.bigram, p, f, d_count, &mut grad);
        }
    }
    Ok((loss, grad))
}
