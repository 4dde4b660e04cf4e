use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{NastError, Result};

pub const MAX_ORDER: usize = 4;

fn ngram_counts<T: Hash + Eq>(s: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for w in s.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram matches and hypothesis n-gram totals for orders 1..=4, plus lengths.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence<T: Hash + Eq>(hyp: &[T], reference: &[T]) -> Self {
        let mut s = Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    /// BLEU in `[0, 100]`: unsmoothed unigram precision, add-one smoothing for
    /// higher orders, and the brevity penalty.
    pub fn score(&self) -> f64 {
        if self.matches[0] == 0 || self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_p = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..MAX_ORDER {
            log_p += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (log_p / MAX_ORDER as f64).exp()
    }
}

/// Corpus-level 4-gram BLEU.
pub fn corpus_bleu<T: Hash + Eq>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(NastError::contract(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(NastError::contract("empty corpus"));
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&BleuStats::sentence(h, r));
    }
    Ok(total.score())
}
