use super::links::AlignmentLinks;
use crate::error::Result;
use crate::vocab::TokenId;

/// Fraction of hypothesis tokens with no link to any source word.
pub fn hallucination_rate(hyp_len: usize, links: &AlignmentLinks) -> Result<f64> {
    links.check_bounds(hyp_len, usize::MAX)?;
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut linked = vec![false; hyp_len];
    for (t, _) in links.pairs() {
        linked[t] = true;
    }
    Ok(linked.iter().filter(|l| !**l).count() as f64 / hyp_len as f64)
}

/// Links every hypothesis token to each source position holding the same
/// symbol. On the synthetic tasks, where targets reuse source symbols, this
/// recovers the alignment of a hypothesis.
pub fn lexical_links(hyp: &[TokenId], source: &[TokenId]) -> AlignmentLinks {
    AlignmentLinks::new(
        hyp.iter()
            .enumerate()
            .flat_map(|(t, &h)| source.iter().enumerate().filter(move |(_, &s)| s == h).map(move |(j, _)| (t, j))),
    )
}

/// Number of link pairs that cross: `(i − i′)(j − j′) < 0`.
pub fn cross_count(links: &AlignmentLinks) -> usize {
    let v: Vec<(usize, usize)> = links.pairs().collect();
    let mut n = 0;
    for (a, &(i, j)) in v.iter().enumerate() {
        for &(i2, j2) in &v[a + 1..] {
            if (i < i2 && j > j2) || (i > i2 && j < j2) {
                n += 1;
            }
        }
    }
    n
}

/// Sentence indices split into easy, medium and hard thirds by cross count.
/// Sorting is stable, so ties keep corpus order.
pub fn partition_by_difficulty(links: &[AlignmentLinks]) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..links.len()).collect();
    let counts: Vec<usize> = links.iter().map(cross_count).collect();
    order.sort_by_key(|&i| counts[i]);
    let n = order.len();
    let (a, b) = (n / 3, 2 * n / 3);
    [order[..a].to_vec(), order[a..b].to_vec(), order[b..].to_vec()]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Links from 1-based `(target, source)` pairs.
    fn one_based(pairs: &[(usize, usize)]) -> AlignmentLinks {
        AlignmentLinks::new(pairs.iter().map(|&(t, s)| (t - 1, s - 1)))
    }

    #[test]
    fn lexical_links_follow_symbols() {
        let l = lexical_links(&[5, 9, 4], &[4, 5, 5]);
        assert_eq!(l.pairs().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (2, 0)]);
        assert!((hallucination_rate(3, &l).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hallucination_examples() {
        let l = one_based(&[(1, 1), (3, 2)]);
        assert!((hallucination_rate(3, &l).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(hallucination_rate(2, &one_based(&[(1, 1), (2, 1)])).unwrap(), 0.0);
        assert_eq!(hallucination_rate(4, &AlignmentLinks::default()).unwrap(), 1.0);
        assert!(hallucination_rate(2, &one_based(&[(3, 1)])).is_err());
    }

    #[test]
    fn cross_examples() {
        assert_eq!(cross_count(&one_based(&[(1, 2), (2, 1)])), 1);
        assert_eq!(cross_count(&one_based(&[(1, 1), (2, 2), (3, 3)])), 0);
        assert_eq!(cross_count(&one_based(&[(1, 3), (2, 2), (3, 1)])), 3);
    }

    #[test]
    fn thirds_with_stable_ties() {
        let mono = AlignmentLinks::new([(0, 0)]);
        let one = one_based(&[(1, 2), (2, 1)]);
        let links = vec![one.clone(), mono.clone(), mono.clone(), one, mono.clone(), mono];
        let [e, m, h] = partition_by_difficulty(&links);
        assert_eq!(e, [1, 2]);
        assert_eq!(m, [4, 5]);
        assert_eq!(h, [0, 3]);
    }
}
