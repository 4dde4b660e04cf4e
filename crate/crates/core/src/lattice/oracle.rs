//! Exhaustive enumeration of every alignment, used as ground truth for the
//! closed-form lattice quantities.

use super::posterior::{Alignment, AlignmentPosterior};
use super::{collapse, Bigram};
use crate::error::{NastError, Result};
use crate::model::position_moment;
use crate::vocab::{TokenId, BLANK};

/// Largest alignment space the oracle will enumerate.
pub const ORACLE_CAP: usize = 1_000_000;

#[derive(Clone, Debug)]
pub enum OracleQuery<'a> {
    /// `p(y)`: total probability of alignments collapsing to `y`.
    Marginal(&'a [TokenId]),
    /// Expected number of adjacent occurrences of a bigram in the collapsed output.
    BigramCount(Bigram),
    /// Expected number of emitted tokens before the last chunk.
    ExpectedTokens,
    /// Expected sum of the moments of those tokens.
    ExpectedMomentSum,
    /// Most probable alignment collapsing to `y`.
    Argmax(&'a [TokenId]),
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleAnswer {
    Value(f64),
    /// `None` when no alignment collapses to the target.
    Alignment(Option<(Alignment, f64)>),
}

impl OracleAnswer {
    pub fn value(&self) -> f64 {
        match self {
            OracleAnswer::Value(v) => *v,
            OracleAnswer::Alignment(Some((_, p))) => *p,
            OracleAnswer::Alignment(None) => 0.0,
        }
    }
}

/// Emitted tokens of an alignment with the frame at which each was first written.
fn emissions(a: &[TokenId]) -> Vec<(TokenId, usize)> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for (t, &v) in a.iter().enumerate() {
        if v != BLANK && v != prev {
            out.push((v, t));
        }
        prev = v;
    }
    out
}

/// Calls `visit(alignment, probability)` for every length-T alignment.
pub fn for_each_alignment<F>(p: &AlignmentPosterior, mut visit: F) -> Result<()>
where
    F: FnMut(&[TokenId], f64),
{
    let frames = p.frames();
    let vocab = p.vocab_size();
    let states = (vocab as f64).powi(frames as i32);
    if states > ORACLE_CAP as f64 {
        return Err(NastError::StateSpaceTooLarge {
            states,
            cap: ORACLE_CAP,
        });
    }
    let mut a = vec![0 as TokenId; frames];
    loop {
        let prob: f64 = a.iter().enumerate().map(|(t, &v)| p.prob(t, v)).product();
        visit(&a, prob);
        // Odometer increment.
        let mut t = frames;
        loop {
            if t == 0 {
                return Ok(());
            }
            t -= 1;
            a[t] += 1;
            if (a[t] as usize) < vocab {
                break;
            }
            a[t] = 0;
        }
    }
}

pub fn enumerate_oracle(p: &AlignmentPosterior, query: OracleQuery<'_>) -> Result<OracleAnswer> {
    let meta = p.meta();
    let counted = meta.src_len.saturating_sub(1) * meta.lambda;
    match query {
        OracleQuery::Marginal(y) => {
            let mut total = 0.0;
            for_each_alignment(p, |a, prob| {
                if collapse(a) == y {
                    total += prob;
                }
            })?;
            Ok(OracleAnswer::Value(total))
        }
        OracleQuery::BigramCount(g) => {
            let mut total = 0.0;
            for_each_alignment(p, |a, prob| {
                let c = collapse(a);
                let n = c.windows(2).filter(|w| (w[0], w[1]) == g).count();
                total += prob * n as f64;
            })?;
            Ok(OracleAnswer::Value(total))
        }
        OracleQuery::ExpectedTokens => {
            let mut total = 0.0;
            for_each_alignment(p, |a, prob| {
                let n = emissions(a).iter().filter(|(_, t)| *t < counted).count();
                total += prob * n as f64;
            })?;
            Ok(OracleAnswer::Value(total))
        }
        OracleQuery::ExpectedMomentSum => {
            let mut total = 0.0;
            for_each_alignment(p, |a, prob| {
                let s: usize = emissions(a)
                    .iter()
                    .filter(|(_, t)| *t < counted)
                    .map(|(_, t)| position_moment(t + 1, meta.lambda, meta.k, meta.src_len))
                    .sum();
                total += prob * s as f64;
            })?;
            Ok(OracleAnswer::Value(total))
        }
        OracleQuery::Argmax(y) => {
            let mut best: Option<(Vec<TokenId>, f64)> = None;
            for_each_alignment(p, |a, prob| {
                if best.as_ref().map_or(true, |(_, b)| prob > *b) && collapse(a) == y {
                    best = Some((a.to_vec(), prob));
                }
            })?;
            Ok(OracleAnswer::Alignment(
                best.map(|(a, prob)| (Alignment::new(a), prob)),
            ))
        }
    }
}
