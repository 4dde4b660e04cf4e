use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::glancing::{anneal_ratio, glancing_replace};
use super::loss::{example_loss_grad, posterior_loss, ExampleInput, LossBreakdown, Objective};
use super::optim::{clip_grad_norm, Adam, LrSchedule};
use crate::data::ParallelCorpus;
use crate::error::{NastError, Result};
use crate::lattice::expected_al;
use crate::model::{posterior_from_tensor, upsampled_ids, NastModel};
use crate::numeric::Tensor;
use crate::vocab::TokenId;

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    /// Batch-mean loss.
    pub loss: LossBreakdown,
    pub sentences: usize,
    pub grad_norm: f64,
    pub glancing_ratio: f64,
    /// Batch-mean expected AL (stage 2 with latency only).
    pub expected_al: Option<f64>,
}

impl StepReport {
    pub fn log_line(&self) -> String {
        let mut s = format!(
            "step={} lr={:.3e} loss={:.5} main={:.5} smooth={:.5} latency={:.5} sents={} gnorm={:.3} glance={:.3}",
            self.step,
            self.lr,
            self.loss.total,
            self.loss.main,
            self.loss.smoothing,
            self.loss.latency,
            self.sentences,
            self.grad_norm,
            self.glancing_ratio
        );
        if let Some(al) = self.expected_al {
            s.push_str(&format!(" expected_al={al:.4}"));
        }
        s
    }
}

/// Validation summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub step: u64,
    /// Mean CTC negative log-likelihood.
    pub ctc_loss: f64,
    /// Fraction of sentences whose greedy output equals the reference.
    pub exact_match: f64,
    /// Mean expected AL over sentences with at least two source tokens.
    pub expected_al: f64,
    pub hypotheses: Vec<Vec<TokenId>>,
}

impl EvalReport {
    pub fn log_line(&self) -> String {
        format!(
            "eval step={} ctc={:.5} exact={:.4} expected_al={:.4}",
            self.step, self.ctc_loss, self.exact_match, self.expected_al
        )
    }
}

/// Greedy decoding, CTC loss and expected AL of every validation pair at chunk wait `k`.
pub fn evaluate(model: &NastModel<f32>, corpus: &ParallelCorpus, k: usize, step: u64) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(NastError::contract("empty validation corpus"));
    }
    let (mut ctc, mut exact, mut al, mut al_n) = (0.0, 0usize, 0.0, 0usize);
    let mut hypotheses = Vec::with_capacity(corpus.len());
    for pair in corpus.pairs() {
        let lp = model.log_probs(&pair.source, k)?;
        let p = posterior_from_tensor(&lp, model.config().lambda, k, pair.source.len())?;
        ctc += posterior_loss(Objective::Ctc { smoothing: 0.0 }, &pair.target, &p)?.0.main;
        let hyp = p.argmax_alignment().collapse();
        exact += usize::from(hyp == pair.target);
        if pair.source.len() >= 2 {
            al += expected_al(&p)?;
            al_n += 1;
        }
        hypotheses.push(hyp);
    }
    let n = corpus.len() as f64;
    Ok(EvalReport {
        step,
        ctc_loss: ctc / n,
        exact_match: exact as f64 / n,
        expected_al: if al_n > 0 { al / al_n as f64 } else { 0.0 },
        hypotheses,
    })
}

/// Warns when warm-started stage-2 training degrades validation CTC loss by more
/// than a configured amount at its first evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SanityMonitor {
    pub baseline: f64,
    pub threshold: f64,
    checked: bool,
}

impl SanityMonitor {
    pub fn new(baseline: f64, threshold: f64) -> Self {
        Self {
            baseline,
            threshold,
            checked: false,
        }
    }

    /// Returns the rise over the baseline on the first call, `None` afterwards.
    pub fn check(&mut self, ctc_loss: f64) -> Option<f64> {
        if self.checked {
            return None;
        }
        self.checked = true;
        let rise = ctc_loss - self.baseline;
        if rise > self.threshold {
            log::warn!(
                "stage-2 warm start raised validation CTC loss by {rise:.4} (threshold {:.4})",
                self.threshold
            );
        } else {
            log::info!("stage-2 warm start: validation CTC loss change {rise:+.4}");
        }
        Some(rise)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: LossBreakdown,
    pub evals: Vec<EvalReport>,
    pub glancing_skipped: u64,
    /// Rise of validation CTC loss at the first stage-2 evaluation.
    pub warm_start_rise: Option<f64>,
    pub seconds: f64,
}

pub struct Trainer {
    model: NastModel<f32>,
    cfg: TrainConfig,
    opt: Adam,
    rng: ChaCha8Rng,
    step: u64,
    glancing_skipped: u64,
}

impl Trainer {
    pub fn new(model: NastModel<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = Adam::new(model.params(), cfg.weight_decay);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            model,
            cfg,
            opt,
            rng,
            step: 0,
            glancing_skipped: 0,
        })
    }

    pub fn model(&self) -> &NastModel<f32> {
        &self.model
    }

    pub fn into_model(self) -> NastModel<f32> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn objective(&self) -> Objective {
        if self.cfg.stage == 1 {
            Objective::Ctc {
                smoothing: self.cfg.label_smoothing,
            }
        } else {
            Objective::Nmla {
                latency_floor: self.cfg.latency_active().then_some(self.cfg.l_min),
            }
        }
    }

    /// One epoch of shuffled batches, each filled up to the token budget.
    pub fn make_batches(&mut self, corpus: &ParallelCorpus) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.rng);
        let mut batches = Vec::new();
        let mut cur = Vec::new();
        let mut tokens = 0;
        for i in order {
            let p = &corpus.pairs()[i];
            let n = p.source.len().max(p.target.len());
            if !cur.is_empty() && tokens + n > self.cfg.batch_tokens {
                batches.push(std::mem::take(&mut cur));
                tokens = 0;
            }
            cur.push(i);
            tokens += n;
        }
        if !cur.is_empty() {
            batches.push(cur);
        }
        batches
    }

    /// Forward, backward and one optimizer update on the given pairs.
    pub fn train_step(&mut self, corpus: &ParallelCorpus, batch: &[usize]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(NastError::contract("empty batch"));
        }
        let objective = self.objective();
        let k = self.cfg.k;
        let lambda = self.model.config().lambda;
        let ratio = anneal_ratio(self.step, &self.cfg.glancing());
        let use_dropout = self.model.config().dropout > 0.0;
        let mut sum: Option<Vec<Tensor<f32>>> = None;
        let mut loss = LossBreakdown::default();
        let (mut al_sum, mut al_n) = (0.0, 0usize);
        for &i in batch {
            let pair = &corpus.pairs()[i];
            let mut glanced = None;
            if ratio > 0.0 {
                let lp = self.model.log_probs(&pair.source, k)?;
                let p = posterior_from_tensor(&lp, lambda, k, pair.source.len())?;
                let inputs = upsampled_ids(&pair.source, lambda);
                match glancing_replace(&inputs, &pair.target, &p, ratio, &mut self.rng) {
                    Ok((ids, _)) => glanced = Some(ids),
                    Err(NastError::Infeasible { .. }) => self.glancing_skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            let (l, grads) = example_loss_grad(
                &self.model,
                objective,
                ExampleInput {
                    source: &pair.source,
                    target: &pair.target,
                    k,
                    decoder_ids: glanced.as_deref(),
                    dropout_rng: use_dropout.then_some(&mut self.rng),
                },
            )?;
            if self.cfg.latency_active() && pair.source.len() >= 2 {
                al_sum += l.expected_al;
                al_n += 1;
            }
            loss.accumulate(&l);
            match &mut sum {
                None => sum = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.add_assign(g);
                    }
                }
            }
        }
        let n = batch.len() as f64;
        let mut grads = sum.expect("non-empty batch");
        let inv = (1.0 / n) as f32;
        for g in &mut grads {
            for x in g.data_mut() {
                *x *= inv;
            }
        }
        let grad_norm = clip_grad_norm(&mut grads, self.cfg.grad_clip);
        self.step += 1;
        let lr = LrSchedule {
            peak: self.cfg.lr_peak,
            warmup: self.cfg.warmup_steps,
        }
        .at(self.step);
        self.opt.step(self.model.params_mut(), &grads, lr);
        Ok(StepReport {
            step: self.step,
            lr,
            loss: loss.scaled(1.0 / n),
            sentences: batch.len(),
            grad_norm,
            glancing_ratio: ratio,
            expected_al: (al_n > 0).then(|| al_sum / al_n as f64),
        })
    }

    /// Trains for the configured number of steps, logging to `log` and evaluating on
    /// `valid` every `eval_every` steps. `stop` may end training early after an evaluation.
    pub fn run(
        &mut self,
        train: &ParallelCorpus,
        valid: Option<&ParallelCorpus>,
        log: &mut dyn Write,
        mut stop: impl FnMut(&EvalReport) -> bool,
    ) -> Result<TrainSummary> {
        if train.is_empty() {
            return Err(NastError::contract("empty training corpus"));
        }
        let started = Instant::now();
        let mut summary = TrainSummary::default();
        let mut monitor = match (self.cfg.stage, valid) {
            (2, Some(v)) => {
                let base = evaluate(&self.model, v, self.cfg.k, self.step)?;
                let line = format!("warm-start {}", base.log_line());
                writeln!(log, "{line}").map_err(|e| NastError::io("metrics log", e))?;
                Some(SanityMonitor::new(base.ctc_loss, self.cfg.sanity_threshold))
            }
            _ => None,
        };
        let mut batches = Vec::new().into_iter();
        let target = self.step + self.cfg.steps;
        while self.step < target {
            let batch = match batches.next() {
                Some(b) => b,
                None => {
                    batches = self.make_batches(train).into_iter();
                    continue;
                }
            };
            let report = self.train_step(train, &batch)?;
            summary.final_loss = report.loss;
            let w = |log: &mut dyn Write, s: String| writeln!(log, "{s}").map_err(|e| NastError::io("metrics log", e));
            if self.cfg.log_every > 0 && report.step % self.cfg.log_every == 0 {
                w(log, report.log_line())?;
            }
            let eval_due = self.cfg.eval_every > 0 && report.step % self.cfg.eval_every == 0;
            if let (Some(v), true) = (valid, eval_due || self.step == target) {
                let ev = evaluate(&self.model, v, self.cfg.k, self.step)?;
                w(log, ev.log_line())?;
                if let Some(m) = monitor.as_mut() {
                    if let Some(rise) = m.check(ev.ctc_loss) {
                        summary.warm_start_rise = Some(rise);
                    }
                }
                let done = stop(&ev);
                summary.evals.push(ev);
                if done {
                    break;
                }
            }
        }
        summary.steps = self.step;
        summary.glancing_skipped = self.glancing_skipped;
        summary.seconds = started.elapsed().as_secs_f64();
        Ok(summary)
    }
}
