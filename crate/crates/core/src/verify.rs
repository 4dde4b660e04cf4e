//! Randomized self-checks: closed-form lattice quantities against brute-force
//! enumeration, and analytic loss gradients against finite differences.
//!
//! Both the `nast oracle` / `nast gradcheck` commands and the acceptance tests
//! run these suites.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NastError, Result};
use crate::lattice::{
    collapse, ctc_log_prob, enumerate_oracle, expected_bigram_count, latency_loss, latency_loss_grad,
    latency_terms, log_softmax_backward, min_frames, nmla_loss, nmla_loss_grad, reference_bigrams,
    viterbi_alignment, AlignmentPosterior, Bigram, OracleAnswer, OracleQuery, PosteriorMeta,
};
use crate::model::{ModelConfig, NastModel};
use crate::numeric::{grad_check, grad_check_grouped, GradReport, Tensor};
use crate::train::{example_loss, example_loss_grad, posterior_loss, ExampleInput, Objective};
use crate::vocab::{TokenId, BLANK};

/// Error measure of the oracle suite: absolute below 1, relative above.
pub fn oracle_error(fast: f64, exact: f64) -> f64 {
    (fast - exact).abs() / exact.abs().max(1.0)
}

/// A random small posterior: λ ∈ {1, 2}, at most `max_frames` frames, `|V| ≤ max_vocab`.
pub fn random_posterior(rng: &mut ChaCha8Rng, max_frames: usize, max_vocab: usize) -> AlignmentPosterior {
    let vocab = rng.gen_range(2..=max_vocab);
    let lambda = if max_frames >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
    let src_len = rng.gen_range(1..=max_frames / lambda);
    let k = rng.gen_range(0..3);
    let meta = PosteriorMeta { lambda, k, src_len };
    let scale = [0.5, 2.0, 5.0][rng.gen_range(0..3)];
    let logits: Vec<f64> = (0..lambda * src_len * vocab)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    AlignmentPosterior::from_logits(&logits, vocab, meta).expect("finite logits form a valid posterior")
}

/// Draws one alignment from the per-frame categoricals.
pub fn sample_alignment(rng: &mut ChaCha8Rng, p: &AlignmentPosterior) -> Vec<TokenId> {
    (0..p.frames())
        .map(|t| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for v in 0..p.vocab_size() {
                acc += p.prob(t, v as TokenId);
                if u < acc {
                    return v as TokenId;
                }
            }
            (p.vocab_size() - 1) as TokenId
        })
        .collect()
}

/// Expected bigram count as the quadratic sum over frame pairs `t < t′` with
/// only blanks in between. Slow but independent of the prefix recurrence.
pub fn pairwise_bigram_count(g: Bigram, p: &AlignmentPosterior) -> f64 {
    let frames = p.frames();
    let mut total = 0.0;
    for t in 0..frames {
        let mut gap = 1.0;
        for u in t + 1..frames {
            if g.0 != g.1 || u > t + 1 {
                total += p.prob(t, g.0) * gap * p.prob(u, g.1);
            }
            gap *= p.prob(u, BLANK);
        }
    }
    total
}

#[derive(Clone, Debug, Default)]
pub struct OracleSuiteReport {
    pub instances: usize,
    pub comparisons: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// One line per comparison that exceeded the tolerance.
    pub failures: Vec<String>,
}

impl OracleSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances > 0
    }

    fn record(&mut self, what: &str, instance: usize, fast: f64, exact: f64) {
        let err = oracle_error(fast, exact);
        self.comparisons += 1;
        if err.is_nan() || err > self.tolerance {
            self.failures
                .push(format!("instance {instance}: {what} fast {fast:.12e} exact {exact:.12e}"));
        }
        if err.is_nan() {
            self.max_error = f64::INFINITY;
        } else {
            self.max_error = self.max_error.max(err);
        }
    }
}

impl fmt::Display for OracleSuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "pass" } else { "FAIL" };
        write!(
            f,
            "{verdict}: {} instances, {} comparisons, max error {:.3e} (tol {:.0e})",
            self.instances, self.comparisons, self.max_error, self.tolerance
        )?;
        for line in self.failures.iter().take(5) {
            write!(f, "\n  {line}")?;
        }
        Ok(())
    }
}

fn random_target(rng: &mut ChaCha8Rng, p: &AlignmentPosterior) -> Vec<TokenId> {
    if rng.gen_bool(0.8) {
        // Collapsed samples are always feasible; retry a few times for a non-empty one.
        for _ in 0..8 {
            let y = collapse(&sample_alignment(rng, p));
            if !y.is_empty() {
                return y;
            }
        }
    }
    let len = rng.gen_range(1..=p.frames());
    (0..len).map(|_| rng.gen_range(1..p.vocab_size() as TokenId)).collect()
}

/// Compares every closed-form lattice quantity with enumeration on `instances`
/// random posteriors of at most `max_frames` frames over at most `max_vocab` symbols.
pub fn oracle_suite(instances: usize, max_frames: usize, max_vocab: usize, seed: u64, tolerance: f64) -> Result<OracleSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleSuiteReport {
        tolerance,
        ..Default::default()
    };
    for i in 0..instances {
        let p = random_posterior(&mut rng, max_frames, max_vocab);
        let y = random_target(&mut rng, &p);
        let feasible = p.frames() >= min_frames(&y);

        let exact = enumerate_oracle(&p, OracleQuery::Marginal(&y))?.value();
        report.record("marginal", i, ctc_log_prob(&y, &p)?.exp(), exact);

        match (enumerate_oracle(&p, OracleQuery::Argmax(&y))?, viterbi_alignment(&y, &p)) {
            (OracleAnswer::Alignment(Some((_, best))), Ok(a)) => {
                if a.collapse() != y {
                    report.failures.push(format!("instance {i}: viterbi path does not collapse to target"));
                }
                report.record("viterbi score", i, a.log_prob(&p).exp(), best);
            }
            (OracleAnswer::Alignment(None), Err(NastError::Infeasible { .. })) if !feasible => {
                report.comparisons += 1;
            }
            (oracle, fast) => report.failures.push(format!(
                "instance {i}: viterbi disagrees on feasibility ({oracle:?} vs {:?})",
                fast.map(|a| a.into_inner())
            )),
        }

        let mut bigrams: Vec<Bigram> = reference_bigrams(&y).into_keys().collect();
        let v = p.vocab_size() as TokenId;
        bigrams.push((rng.gen_range(1..v), rng.gen_range(1..v)));
        for g in bigrams {
            let exact = enumerate_oracle(&p, OracleQuery::BigramCount(g))?.value();
            report.record("bigram count", i, expected_bigram_count(g, &p)?, exact);
            report.record("pairwise bigram count", i, pairwise_bigram_count(g, &p), exact);
        }

        if p.meta().src_len >= 2 {
            let terms = latency_terms(&p)?;
            let tokens = enumerate_oracle(&p, OracleQuery::ExpectedTokens)?.value();
            let moments = enumerate_oracle(&p, OracleQuery::ExpectedMomentSum)?.value();
            report.record("E[tokens]", i, terms.expected_tokens, tokens);
            report.record("E[moment sum]", i, terms.expected_moment_sum, moments);
        }
        report.instances += 1;
    }
    Ok(report)
}

/// Which loss a gradient instance exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    /// CTC likelihood plus label smoothing.
    StageOne,
    Nmla,
    Latency,
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradTarget::StageOne => "stage-1 loss",
            GradTarget::Nmla => "nmla loss",
            GradTarget::Latency => "latency loss",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GradSuiteReport {
    pub target: GradTarget,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances > 0
    }
}

impl fmt::Display for GradSuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "pass" } else { "FAIL" };
        write!(
            f,
            "{verdict}: {} over {} instances, max rel err {:.3e} (tol {:.0e})",
            self.target, self.instances, self.max_rel_err, self.tolerance
        )?;
        for line in self.failures.iter().take(5) {
            write!(f, "\n  {line}")?;
        }
        Ok(())
    }
}

/// A posterior, target and threshold for one gradient instance.
struct GradCase {
    logits: Vec<f64>,
    vocab: usize,
    meta: PosteriorMeta,
    y: Vec<TokenId>,
    l_min: f64,
}

impl GradCase {
    fn posterior(&self, logits: &[f64]) -> AlignmentPosterior {
        AlignmentPosterior::from_logits(logits, self.vocab, self.meta).expect("finite logits")
    }
}

fn grad_case(rng: &mut ChaCha8Rng, target: GradTarget) -> GradCase {
    loop {
        let p = random_posterior(rng, 8, 5);
        if target == GradTarget::Latency && p.meta().src_len < 2 {
            continue;
        }
        let y = collapse(&sample_alignment(rng, &p));
        let need = if target == GradTarget::Nmla { 2 } else { 1 };
        if target != GradTarget::Latency && y.len() < need {
            continue;
        }
        let mut l_min = 0.0;
        if target == GradTarget::Latency {
            let al = crate::lattice::expected_al(&p).expect("source has two tokens");
            // Keep away from the kink of the threshold.
            l_min = if rng.gen_bool(0.8) { al - rng.gen_range(0.1..2.0) } else { al + 0.5 };
        }
        let logits = p.log_probs().to_vec();
        return GradCase {
            logits,
            vocab: p.vocab_size(),
            meta: p.meta(),
            y,
            l_min,
        };
    }
}

fn case_value_grad(target: GradTarget, case: &GradCase, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = case.posterior(logits);
    let (value, grad) = match target {
        GradTarget::StageOne => {
            let (b, g) = posterior_loss(Objective::Ctc { smoothing: 0.1 }, &case.y, &p)?;
            (b.total, g)
        }
        GradTarget::Nmla => nmla_loss_grad(&case.y, &p)?,
        GradTarget::Latency => latency_loss_grad(&p, case.l_min)?,
    };
    Ok((value, log_softmax_backward(p.log_probs(), &grad, case.vocab)))
}

fn case_value(target: GradTarget, case: &GradCase, logits: &[f64]) -> f64 {
    let p = case.posterior(logits);
    let r = match target {
        GradTarget::StageOne => {
            posterior_loss(Objective::Ctc { smoothing: 0.1 }, &case.y, &p).map(|(b, _)| b.total)
        }
        GradTarget::Nmla => nmla_loss(&case.y, &p),
        GradTarget::Latency => latency_loss(&p, case.l_min),
    };
    r.unwrap_or(f64::NAN)
}

/// Finite-difference checks of one loss with respect to the logits of
/// `instances` random posteriors.
pub fn grad_suite(target: GradTarget, instances: usize, seed: u64, tolerance: f64) -> Result<GradSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradSuiteReport {
        target,
        instances: 0,
        max_rel_err: 0.0,
        tolerance,
        failures: Vec::new(),
    };
    for i in 0..instances {
        let case = grad_case(&mut rng, target);
        let (_, analytic) = case_value_grad(target, &case, &case.logits)?;
        let check = grad_check(|x| case_value(target, &case, x), &case.logits, &analytic, 1e-5, tolerance);
        report.max_rel_err = report.max_rel_err.max(check.max_rel_err);
        if !check.passed {
            report.failures.push(format!("instance {i} (y = {:?}): {check}", case.y));
        }
        report.instances += 1;
    }
    Ok(report)
}

/// A model small enough for exhaustive finite differences in f64.
pub fn tiny_model_config(lambda: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 7,
        embed_dim: 8,
        enc_layers: 1,
        dec_layers: 2,
        heads: 2,
        ffn_dim: 12,
        lambda,
        k: 0,
        dropout: 0.0,
        max_positions: 32,
    }
}

/// Finite-difference check of `objective` through every parameter of a tiny
/// random model on a random sentence pair.
pub fn model_grad_check(objective: Objective, k: usize, seed: u64, tolerance: f64) -> Result<GradReport> {
    let config = tiny_model_config(2);
    let vocab = config.vocab_size as TokenId;
    let model = NastModel::<f64>::new(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source: Vec<TokenId> = (0..4).map(|_| rng.gen_range(3..vocab)).collect();
    let target: Vec<TokenId> = (0..3).map(|_| rng.gen_range(3..vocab)).collect();
    let (_, grads) = example_loss_grad(
        &model,
        objective,
        ExampleInput {
            source: &source,
            target: &target,
            k,
            decoder_ids: None,
            dropout_rng: None,
        },
    )?;
    let analytic: Vec<f64> = grads.iter().flat_map(Tensor::data).copied().collect();
    let groups: Vec<(String, usize)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.numel()))
        .collect();
    let point = model.params().flatten();
    let mut probe = model.clone();
    Ok(grad_check_grouped(
        |x| {
            probe.params_mut().assign_flat(x);
            example_loss(&probe, objective, &source, &target, k).map_or(f64::NAN, |b| b.total)
        },
        &point,
        &analytic,
        &groups,
        1e-4,
        tolerance,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_small_run() {
        let r = oracle_suite(40, 6, 4, 11, 1e-6).unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.comparisons > 40 * 3);
    }

    #[test]
    fn grad_suites_small_run() {
        for t in [GradTarget::StageOne, GradTarget::Nmla, GradTarget::Latency] {
            let r = grad_suite(t, 8, 5, 1e-4).unwrap();
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn pairwise_count_matches_worked_value() {
        let p = AlignmentPosterior::from_probs(&[1.0 / 3.0; 9], 3, PosteriorMeta::unit(3)).unwrap();
        assert!((pairwise_bigram_count((1, 2), &p) - 7.0 / 27.0).abs() < 1e-12);
    }
}
