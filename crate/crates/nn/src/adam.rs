use crate::graph::Gradients;
use crate::tensor::ParamStore;
use crate::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear ramp from zero over `warmup_steps`, then
    /// `(step - warmup_steps)^-power`.
    WarmupDecay { warmup_steps: u64, power: f64 },
}

impl LrSchedule {
    /// Multiplier on the base rate at the 1-based optimizer step `step`.
    pub fn factor(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::WarmupDecay { warmup_steps, power } => {
                if step <= warmup_steps {
                    step as f64 / warmup_steps.max(1) as f64
                } else {
                    ((step - warmup_steps) as f64).powf(-power)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule: LrSchedule::Constant,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.ids().map(|id| vec![T::zero(); params.get(id).len()]).collect();
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate that the next call to [`Adam::step`] will use.
    pub fn next_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.step + 1)
    }

    pub fn reset(&mut self) {
        self.step = 0;
        for m in self.first.iter_mut().chain(self.second.iter_mut()) {
            m.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Applies one update. Parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        assert_eq!(self.first.len(), params.len(), "optimizer built for a different parameter set");
        let lr = self.next_lr();
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        let (b1t, b2t) = (T::lit(b1), T::lit(b2));
        let step_size = T::lit(lr / correction1);
        let inv_sqrt_c2 = T::lit(1.0 / correction2.sqrt());
        let eps = T::lit(self.config.eps);
        for (id, grad) in grads.iter() {
            let i = id.index();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let values = params.get_mut(id).data_mut();
            assert_eq!(values.len(), grad.len(), "gradient shape differs from parameter `{i}`");
            for (((p, &g), mi), vi) in values.iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1t * *mi + (T::one() - b1t) * g;
                *vi = b2t * *vi + (T::one() - b2t) * g * g;
                *p = *p - step_size * *mi / (vi.sqrt() * inv_sqrt_c2 + eps);
            }
        }
    }
}
