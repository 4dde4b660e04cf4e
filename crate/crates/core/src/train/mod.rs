//! Two-stage optimization: CTC pre-training, then NMLA with the latency penalty.

mod config;
mod glancing;
mod loss;
mod optim;
mod trainer;

pub use config::{GlancingSchedule, TrainConfig};
pub use glancing::{anneal_ratio, glancing_replace, GlancingPlan};
pub use loss::{example_loss, example_loss_grad, posterior_loss, uniform_kl, ExampleInput, LossBreakdown, Objective};
pub use optim::{clip_grad_norm, grad_norm, Adam, LrSchedule};
pub use trainer::{evaluate, EvalReport, SanityMonitor, StepReport, TrainSummary, Trainer};
