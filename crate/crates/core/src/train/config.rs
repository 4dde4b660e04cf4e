use serde::{Deserialize, Serialize};

use crate::error::{NastError, Result};

/// Linear glancing-ratio annealing from `start` to `end` over `anneal_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlancingSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for GlancingSchedule {
    fn default() -> Self {
        Self {
            start: 0.5,
            end: 0.3,
            anneal_steps: 4000,
        }
    }
}

impl GlancingSchedule {
    pub fn disabled() -> Self {
        Self {
            start: 0.0,
            end: 0.0,
            anneal_steps: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// 1 = CTC, 2 = NMLA (+ latency at k = 0).
    pub stage: u8,
    pub steps: u64,
    /// Token budget per batch, counted as `max(|x|, |y|)` per pair.
    pub batch_tokens: usize,
    pub lr_peak: f64,
    pub warmup_steps: u64,
    pub label_smoothing: f64,
    pub glancing_start: f64,
    pub glancing_end: f64,
    pub glancing_anneal_steps: u64,
    /// Latency threshold; expected AL below it is not penalized.
    pub l_min: f64,
    /// Chunk wait used during training.
    pub k: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Largest tolerated rise of validation CTC loss at the first stage-2 evaluation.
    pub sanity_threshold: f64,
    pub log_every: u64,
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            steps: 20_000,
            batch_tokens: 512,
            lr_peak: 1e-3,
            warmup_steps: 500,
            label_smoothing: 0.01,
            glancing_start: 0.5,
            glancing_end: 0.3,
            glancing_anneal_steps: 4000,
            l_min: 0.0,
            k: 0,
            seed: 1,
            weight_decay: 0.0,
            grad_clip: 1.0,
            sanity_threshold: 1.0,
            log_every: 100,
            eval_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(NastError::Config(m));
        if !matches!(self.stage, 1 | 2) {
            return fail(format!("stage must be 1 or 2, got {}", self.stage));
        }
        if self.batch_tokens == 0 {
            return fail("batch_tokens must be positive".into());
        }
        if !(self.lr_peak > 0.0 && self.lr_peak.is_finite()) {
            return fail(format!("lr_peak {} must be positive", self.lr_peak));
        }
        let g = self.glancing();
        if !(0.0..=1.0).contains(&g.start) || !(0.0..=1.0).contains(&g.end) {
            return fail("glancing ratios must lie in [0, 1]".into());
        }
        if self.label_smoothing < 0.0 || self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return fail("label_smoothing, weight_decay and grad_clip must be non-negative".into());
        }
        if self.l_min < 0.0 {
            return fail(format!("l_min {} must be non-negative", self.l_min));
        }
        Ok(())
    }

    pub fn glancing(&self) -> GlancingSchedule {
        GlancingSchedule {
            start: self.glancing_start,
            end: self.glancing_end,
            anneal_steps: self.glancing_anneal_steps,
        }
    }

    pub fn set_glancing(&mut self, g: GlancingSchedule) {
        self.glancing_start = g.start;
        self.glancing_end = g.end;
        self.glancing_anneal_steps = g.anneal_steps;
    }

    /// Whether the latency term joins the stage-2 objective.
    pub fn latency_active(&self) -> bool {
        self.stage == 2 && self.k == 0
    }
}
