//! Most probable alignment among those collapsing to a given target.

use super::ctc::{min_frames, Lattice};
use super::posterior::{Alignment, AlignmentPosterior};
use crate::error::{NastError, Result};
use crate::vocab::{TokenId, BLANK};

/// Returns `argmax_{a ∈ β(y;T)} p(a)`.
///
/// Exact ties between predecessors are resolved in favour of the blank state:
/// a token state prefers entering from the preceding blank, then staying, then
/// skipping; a blank state prefers staying; at the last frame the trailing blank
/// wins.
pub fn viterbi_alignment(y: &[TokenId], p: &AlignmentPosterior) -> Result<Alignment> {
    p.check_target(y)?;
    let frames = p.frames();
    if frames < min_frames(y) || frames == 0 {
        return Err(NastError::Infeasible {
            target_len: y.len(),
            frames,
        });
    }
    let lat = Lattice::new(y);
    let s_len = lat.states();
    let mut score = vec![f64::NEG_INFINITY; frames * s_len];
    let mut back = vec![usize::MAX; frames * s_len];
    score[0] = p.log_prob(0, lat.label(0));
    if s_len > 1 {
        score[1] = p.log_prob(0, lat.label(1));
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = |q: usize| score[(t - 1) * s_len + q];
            let mut candidates: [Option<usize>; 3] = [None; 3];
            if lat.label(s) == BLANK {
                candidates[0] = Some(s);
                candidates[1] = s.checked_sub(1);
            } else {
                candidates[0] = Some(s - 1);
                candidates[1] = Some(s);
                if lat.can_skip(s) {
                    candidates[2] = Some(s - 2);
                }
            }
            let mut best: Option<(usize, f64)> = None;
            for q in candidates.into_iter().flatten() {
                let v = prev(q);
                if v == f64::NEG_INFINITY {
                    continue;
                }
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((q, v));
                }
            }
            if let Some((q, v)) = best {
                score[t * s_len + s] = v + p.log_prob(t, lat.label(s));
                back[t * s_len + s] = q;
            }
        }
    }
    let last = (frames - 1) * s_len;
    let mut end: Option<(usize, f64)> = None;
    for s in lat.finals() {
        let v = score[last + s];
        if v > f64::NEG_INFINITY && end.map_or(true, |(_, b)| v > b) {
            end = Some((s, v));
        }
    }
    let Some((mut s, _)) = end else {
        return Err(NastError::Infeasible {
            target_len: y.len(),
            frames,
        });
    };
    let mut path = vec![BLANK; frames];
    for t in (0..frames).rev() {
        path[t] = lat.label(s);
        if t > 0 {
            s = back[t * s_len + s];
        }
    }
    Ok(Alignment::new(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{collapse, PosteriorMeta};

    #[test]
    fn worked_example() {
        let p = AlignmentPosterior::from_probs(&[0.4, 0.6, 0.7, 0.3], 2, PosteriorMeta::unit(2)).unwrap();
        assert_eq!(viterbi_alignment(&[1], &p).unwrap().as_slice(), &[1, 0]);
    }

    #[test]
    fn single_frame_single_candidate() {
        let p = AlignmentPosterior::from_probs(&[0.9, 0.1], 2, PosteriorMeta::unit(1)).unwrap();
        assert_eq!(viterbi_alignment(&[1], &p).unwrap().as_slice(), &[1]);
    }

    #[test]
    fn infeasible_target_is_an_error() {
        let p = AlignmentPosterior::from_probs(&[0.5; 4], 2, PosteriorMeta::unit(2)).unwrap();
        assert!(matches!(
            viterbi_alignment(&[1, 1], &p),
            Err(NastError::Infeasible { .. })
        ));
    }

    #[test]
    fn ties_prefer_blank() {
        // Uniform posterior: every member of β([1];2) is equally likely.
        let p = AlignmentPosterior::from_probs(&[0.5; 4], 2, PosteriorMeta::unit(2)).unwrap();
        let a = viterbi_alignment(&[1], &p).unwrap();
        assert_eq!(a.as_slice(), &[1, 0]);
        assert_eq!(collapse(a.as_slice()), vec![1]);
    }
}
