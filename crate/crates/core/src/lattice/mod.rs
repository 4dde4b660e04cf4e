//! Latent-alignment mathematics: collapsing, CTC marginals, Viterbi alignments,
//! expected bigram matching, reservation probabilities and expected lagging.

mod bigram;
mod ctc;
mod latency;
mod oracle;
mod posterior;
mod viterbi;

pub use bigram::{
    expected_bigram_count, expected_bigram_counts, nmla_loss, nmla_loss_grad, reference_bigrams, Bigram,
    BigramEntry, BigramTable,
};
pub use ctc::{ctc_log_prob, ctc_log_prob_grad, min_frames};
pub use latency::{
    al_from_terms, expected_al, expected_al_grad, latency_loss, latency_loss_grad, latency_terms,
    reservation_probs, LatencyTerms, EPS_DIV,
};
pub use oracle::{enumerate_oracle, for_each_alignment, OracleAnswer, OracleQuery, ORACLE_CAP};
pub use posterior::{log_softmax_backward, Alignment, AlignmentPosterior, PosteriorMeta};
pub use viterbi::viterbi_alignment;

use crate::vocab::{TokenId, BLANK};

/// Merges runs of equal tokens, then drops blanks.
pub fn collapse(a: &[TokenId]) -> Vec<TokenId> {
    collapse_after(BLANK, a)
}

/// Collapses `a` as if it were preceded by the raw symbol `prev`, so a leading run
/// continuing `prev` emits nothing. Concatenating the outputs chunk by chunk while
/// carrying the last raw symbol reproduces [`collapse`] of the whole sequence.
pub fn collapse_after(mut prev: TokenId, a: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(a.len());
    for &v in a {
        if v != BLANK && v != prev {
            out.push(v);
        }
        prev = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: TokenId = 3;
    const B: TokenId = 4;
    const E: TokenId = BLANK;

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse(&[A, A, E, B]), vec![A, B]);
        assert_eq!(collapse(&[E, E, E]), Vec::<TokenId>::new());
        assert_eq!(collapse(&[A, E, A]), vec![A, A]);
    }

    proptest! {
        #[test]
        fn collapse_is_idempotent_without_adjacent_repeats(a in proptest::collection::vec(0u32..5, 0..20)) {
            let once = collapse(&a);
            prop_assert!(once.len() <= a.len());
            prop_assert!(!once.contains(&BLANK));
            let twice = collapse(&once);
            let mut merged = once.clone();
            merged.dedup();
            prop_assert_eq!(&twice, &merged);
            prop_assert_eq!(collapse(&merged), merged.clone());
        }

        #[test]
        fn chunked_collapse_with_carry_is_global(a in proptest::collection::vec(0u32..4, 1..24), lambda in 1usize..5) {
            let mut out = Vec::new();
            let mut carry = BLANK;
            for chunk in a.chunks(lambda) {
                out.extend(collapse_after(carry, chunk));
                carry = *chunk.last().unwrap();
            }
            prop_assert_eq!(out, collapse(&a));
        }
    }
}
