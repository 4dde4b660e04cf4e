use rand::seq::index::sample;
use rand::Rng;

use super::config::GlancingSchedule;
use crate::error::Result;
use crate::lattice::{viterbi_alignment, Alignment, AlignmentPosterior};
use crate::vocab::TokenId;

/// Glancing ratio at `step`: linear from `start` to `end`, constant afterwards.
pub fn anneal_ratio(step: u64, schedule: &GlancingSchedule) -> f64 {
    if schedule.anneal_steps == 0 || step >= schedule.anneal_steps {
        return schedule.end;
    }
    let frac = step as f64 / schedule.anneal_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlancingPlan {
    /// Most probable alignment of the reference.
    pub target_alignment: Alignment,
    /// Replaced 0-based decoder positions, ascending.
    pub replaced: Vec<usize>,
    /// Positions where the model's argmax alignment differs from the target alignment.
    pub mismatches: usize,
    /// `replaced / mismatches`, or 0 when nothing mismatched.
    pub realized_ratio: f64,
}

/// Overwrites `round(ratio · d)` uniformly chosen decoder inputs with the tokens
/// of the Viterbi alignment of `y`, where `d` is the Hamming distance between
/// that alignment and the model's argmax alignment.
pub fn glancing_replace<R: Rng + ?Sized>(
    inputs: &[TokenId],
    y: &[TokenId],
    p: &AlignmentPosterior,
    ratio: f64,
    rng: &mut R,
) -> Result<(Vec<TokenId>, GlancingPlan)> {
    assert_eq!(inputs.len(), p.frames(), "one decoder input per frame");
    let target = viterbi_alignment(y, p)?;
    let argmax = p.argmax_alignment();
    let mismatches = target
        .as_slice()
        .iter()
        .zip(argmax.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    let n = (ratio * mismatches as f64).round() as usize;
    let mut out = inputs.to_vec();
    let mut replaced = if n == 0 {
        Vec::new()
    } else {
        sample(rng, inputs.len(), n).into_vec()
    };
    replaced.sort_unstable();
    for &i in &replaced {
        out[i] = target.as_slice()[i];
    }
    let realized_ratio = if mismatches == 0 {
        0.0
    } else {
        replaced.len() as f64 / mismatches as f64
    };
    Ok((
        out,
        GlancingPlan {
            target_alignment: target,
            replaced,
            mismatches,
            realized_ratio,
        },
    ))
}
