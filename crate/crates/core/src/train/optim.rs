use crate::model::ParamSet;
use crate::numeric::Tensor;

/// Linear warmup to `peak`, then inverse-square-root decay. Steps are 1-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: u64,
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        let step = step.max(1) as f64;
        if self.warmup == 0 {
            return self.peak;
        }
        let w = self.warmup as f64;
        self.peak * (step / w).min((w / step).sqrt())
    }
}

/// Adam with decoupled weight decay.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet<f32>, weight_decay: f64) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>], lr: f64) {
        assert_eq!(grads.len(), params.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let decay = (lr * self.weight_decay) as f32;
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let denom = v[j].sqrt() / bc2_sqrt + self.eps as f32;
                *w -= step_size * m[j] / denom + decay * *w;
            }
        }
    }
}

/// Global L2 norm of a gradient set.
pub fn grad_norm(grads: &[Tensor<f32>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let c = (max_norm / norm) as f32;
        for g in grads {
            for x in g.data_mut() {
                *x *= c;
            }
        }
    }
    norm
}
