//! Chunk schedule and the three attention horizons.
//!
//! Every mask in the model is a prefix mask, so it is stored as a horizon per
//! query row: row `i` may attend to key rows `0..horizon[i]`.

use crate::error::{NastError, Result};

/// Number of source tokens observed when chunk `chunk` (1-based) is decoded under
/// chunk wait-`k`: `min(chunk + k, src_len)`.
pub fn moment(chunk: usize, k: usize, src_len: usize) -> Result<usize> {
    if chunk == 0 || chunk > src_len {
        return Err(NastError::contract(format!(
            "chunk {chunk} outside 1..={src_len}"
        )));
    }
    Ok((chunk + k).min(src_len))
}

/// Moment of alignment position `pos` (1-based) with `lambda` positions per chunk.
pub fn position_moment(pos: usize, lambda: usize, k: usize, src_len: usize) -> usize {
    debug_assert!(pos >= 1 && lambda >= 1);
    let chunk = (pos - 1) / lambda + 1;
    (chunk + k).min(src_len)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Masks {
    /// Encoder self-attention: position `i` sees source `0..=i`.
    pub encoder: Vec<usize>,
    /// Decoder self-attention: every position of chunk `i` sees decoder positions `..iλ`.
    pub decoder: Vec<usize>,
    /// Cross-attention: every position of chunk `i` sees source `..moment(i)`.
    pub cross: Vec<usize>,
}

impl Masks {
    /// Dense boolean view of a horizon list with `keys` columns.
    pub fn dense(horizons: &[usize], keys: usize) -> Vec<Vec<bool>> {
        horizons.iter().map(|&h| (0..keys).map(|j| j < h).collect()).collect()
    }
}

pub fn build_masks(src_len: usize, lambda: usize, k: usize) -> Masks {
    let encoder = (1..=src_len).collect();
    let mut decoder = Vec::with_capacity(src_len * lambda);
    let mut cross = Vec::with_capacity(src_len * lambda);
    for chunk in 1..=src_len {
        for _ in 0..lambda {
            decoder.push(chunk * lambda);
            cross.push((chunk + k).min(src_len));
        }
    }
    Masks {
        encoder,
        decoder,
        cross,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_examples() {
        assert_eq!(moment(2, 0, 5).unwrap(), 2);
        for j in 1..=3 {
            assert_eq!(position_moment(3 + j, 3, 0, 5), 2);
        }
        assert_eq!(moment(3, 2, 4).unwrap(), 4);
        assert_eq!(moment(1, 2, 4).unwrap(), 3);
        assert!(moment(0, 0, 4).is_err());
        assert!(moment(5, 0, 4).is_err());
    }

    #[test]
    fn cross_mask_follows_wait_k() {
        let m = build_masks(5, 3, 0);
        for chunk in 1..=5 {
            assert_eq!(m.cross[(chunk - 1) * 3], chunk);
        }
        let m = build_masks(5, 3, 2);
        assert_eq!(&m.cross[..3], &[3, 3, 3]);
        assert_eq!(*m.cross.last().unwrap(), 5);
    }

    #[test]
    fn decoder_mask_is_block_causal() {
        let lambda = 3;
        let m = build_masks(4, lambda, 0);
        let dense = Masks::dense(&m.decoder, 4 * lambda);
        // First position of chunk 2 (0-based row λ) sees the end of its chunk but not chunk 3.
        let row = &dense[lambda];
        assert!(row[2 * lambda - 1]);
        assert!(!row[2 * lambda]);
    }

    #[test]
    fn encoder_mask_is_causal() {
        let m = build_masks(4, 2, 1);
        let dense = Masks::dense(&m.encoder, 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dense[i][j], j <= i);
            }
        }
    }
}
