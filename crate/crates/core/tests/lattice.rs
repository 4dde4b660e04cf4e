use nast_core::lattice::{
    collapse, ctc_log_prob, ctc_log_prob_grad, expected_al, expected_bigram_count, latency_loss_grad, nmla_loss,
    reservation_probs, viterbi_alignment, AlignmentPosterior, PosteriorMeta,
};
use nast_core::verify::{oracle_suite, pairwise_bigram_count, random_posterior, sample_alignment};
use nast_core::TokenId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn posterior_and_target(seed: u64) -> (AlignmentPosterior, Vec<TokenId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p = random_posterior(&mut rng, 12, 6);
        let y = collapse(&sample_alignment(&mut rng, &p));
        if !y.is_empty() {
            return (p, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn occupancies_are_distributions(seed in any::<u64>()) {
        let (p, y) = posterior_and_target(seed);
        let (log_z, occ) = ctc_log_prob_grad(&y, &p).unwrap();
        prop_assert!(log_z <= 1e-12);
        prop_assert_eq!(log_z, ctc_log_prob(&y, &p).unwrap());
        let v = p.vocab_size();
        for row in occ.chunks(v) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (tok, &o) in row.iter().enumerate() {
                prop_assert!(o >= -1e-12);
                if tok != 0 && !y.contains(&(tok as TokenId)) {
                    prop_assert!(o.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn viterbi_path_is_a_best_alignment(seed in any::<u64>()) {
        let (p, y) = posterior_and_target(seed);
        let a = viterbi_alignment(&y, &p).unwrap();
        prop_assert_eq!(a.len(), p.frames());
        prop_assert_eq!(a.collapse(), y.clone());
        prop_assert!(a.log_prob(&p) <= ctc_log_prob(&y, &p).unwrap() + 1e-12);
    }

    #[test]
    fn prefix_and_pairwise_bigram_counts_agree(seed in any::<u64>(), a in 1u32..6, b in 1u32..6) {
        let (p, _) = posterior_and_target(seed);
        let v = p.vocab_size() as TokenId;
        let g = (a % (v - 1) + 1, b % (v - 1) + 1);
        let fast = expected_bigram_count(g, &p).unwrap();
        prop_assert!((fast - pairwise_bigram_count(g, &p)).abs() < 1e-12);
        prop_assert!(fast >= 0.0 && fast <= p.frames() as f64);
    }

    #[test]
    fn nmla_is_a_negative_f1(seed in any::<u64>()) {
        let (p, y) = posterior_and_target(seed);
        prop_assume!(y.len() >= 2);
        let l = nmla_loss(&y, &p).unwrap();
        prop_assert!((-1.0..=0.0).contains(&l));
    }

    #[test]
    fn reservation_and_latency_ranges(seed in any::<u64>(), l_min in 0.0f64..4.0) {
        let (p, _) = posterior_and_target(seed);
        let r = reservation_probs(&p);
        prop_assert!(r.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assume!(p.meta().src_len >= 2);
        let al = expected_al(&p).unwrap();
        let (loss, grad) = latency_loss_grad(&p, l_min).unwrap();
        prop_assert!((loss - al.max(l_min)).abs() < 1e-12);
        if al <= l_min {
            prop_assert!(grad.iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn point_mass_marginals() {
    // A deterministic alignment has probability one for its own collapse and zero otherwise.
    let a: Vec<TokenId> = vec![1, 1, 0, 2, 2, 1];
    let mut probs = vec![0.0; a.len() * 3];
    for (t, &v) in a.iter().enumerate() {
        probs[t * 3 + v as usize] = 1.0;
    }
    let p = AlignmentPosterior::from_probs(&probs, 3, PosteriorMeta::unit(a.len())).unwrap();
    assert_eq!(ctc_log_prob(&collapse(&a), &p).unwrap(), 0.0);
    assert_eq!(ctc_log_prob(&[1, 2], &p).unwrap(), f64::NEG_INFINITY);
    assert_eq!(viterbi_alignment(&[1, 2, 1], &p).unwrap().as_slice(), a.as_slice());
}

#[test]
fn oracle_suite_at_full_size() {
    let r = oracle_suite(500, 8, 4, 2024, 1e-6).unwrap();
    assert!(r.passed(), "{r}");
}
