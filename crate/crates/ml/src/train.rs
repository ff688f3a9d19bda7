use crate::model::{Batch, IterationPlan, Model};
use crate::{MlError, Result};
use bbdec_core::circuit::{annotate_noise, build_memory_circuit, CnotSchedule};
use bbdec_core::code::CssCode;
use bbdec_core::sim::{build_timed_dem, sample_timed_shots, TimedDem};
use bbdec_nn::{Adam, AdamConfig, LrSchedule, Mode};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const DEFAULT_SAMPLES_PER_EPOCH: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub rounds: usize,
    pub latent_rounds: usize,
    pub p: f64,
    #[serde(default = "one")]
    pub latent_outputs: usize,
    pub epochs: usize,
    #[serde(default = "default_samples")]
    pub samples_per_epoch: usize,
    #[serde(default)]
    pub reset_optimizer: bool,
}

fn one() -> usize {
    1
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_EPOCH
}

impl StageConfig {
    pub fn plan(&self) -> IterationPlan {
        IterationPlan {
            rounds: self.rounds,
            latent_rounds: self.latent_rounds,
            latent_outputs: self.latent_outputs,
        }
    }

    /// Optimizer steps per epoch; each epoch draws exactly
    /// `steps_per_epoch * batch_size` fresh shots.
    pub fn steps_per_epoch(&self) -> usize {
        (self.samples_per_epoch / self.batch_size.max(1)).max(1)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let fail = |reason: String| Err(MlError::Stage { stage: index, reason });
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail(format!("error rate {} outside (0, 1)", self.p));
        }
        if self.latent_outputs == 0 {
            return fail("at least one latent output".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {}", self.learning_rate));
        }
        Ok(())
    }
}

/// Ordered training stages, stored as `{"stages": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub stages: Vec<StageConfig>,
}

/// Produces timing-aware detector error models for a stage.
pub trait DataSource {
    fn timed_dem(&self, rounds: usize, p: f64) -> Result<TimedDem>;
}

/// Memory experiments of one code under one CNOT schedule.
#[derive(Debug, Clone)]
pub struct CircuitSource {
    pub code: CssCode,
    pub schedule: CnotSchedule,
}

impl DataSource for CircuitSource {
    fn timed_dem(&self, rounds: usize, p: f64) -> Result<TimedDem> {
        let circuit = build_memory_circuit(&self.code, rounds, &self.schedule)?;
        Ok(build_timed_dem(&annotate_noise(circuit, p)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub trace: Vec<TraceRow>,
    /// Iteration plan of the last stage, used for inference.
    pub plan: Option<IterationPlan>,
}

impl TrainingReport {
    pub fn stage_losses(&self, stage: usize) -> Vec<f64> {
        self.trace.iter().filter(|r| r.stage == stage).map(|r| r.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,epoch,step,loss\n");
        for r in &self.trace {
            writeln!(out, "{},{},{},{}", r.stage, r.epoch, r.step, r.loss).unwrap();
        }
        out
    }
}

/// Runs every stage in order on fresh samples. All randomness (shot
/// sampling and dropout) comes from one generator seeded with `seed`.
pub fn train_curriculum(
    model: &mut Model<f32>,
    stages: &[StageConfig],
    source: &dyn DataSource,
    seed: u64,
) -> Result<TrainingReport> {
    for (i, s) in stages.iter().enumerate() {
        s.validate(i)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam: Option<Adam<f32>> = None;
    let mut report = TrainingReport {
        trace: Vec::new(),
        plan: None,
    };
    for (index, stage) in stages.iter().enumerate() {
        let config = AdamConfig {
            lr: stage.learning_rate,
            schedule: stage.schedule,
            ..AdamConfig::default()
        };
        match adam.as_mut() {
            Some(a) => {
                a.config = config;
                if stage.reset_optimizer {
                    a.reset();
                }
            }
            None => adam = Some(Adam::new(config, &model.params)),
        }
        let adam = adam.as_mut().expect("initialized above");
        report.plan = Some(stage.plan());
        if stage.epochs == 0 {
            continue;
        }

        let timed = source.timed_dem(stage.rounds, stage.p)?;
        let masks = model.masks_for(&timed.dem);
        let plan = stage.plan();
        let steps = stage.steps_per_epoch();
        let dropout = model.config.dropout;
        for epoch in 0..stage.epochs {
            let shots = sample_timed_shots(&timed, steps * stage.batch_size, rng.next_u64());
            for (step, chunk) in shots.chunks(stage.batch_size).enumerate() {
                let batch = Batch::from_timed_shots(&timed.dem, chunk);
                let mode = Mode::Train {
                    dropout,
                    seed: rng.next_u64(),
                };
                let (loss, grads) = {
                    let mut g = model.graph(mode);
                    let loss = model.loss(&mut g, &batch, &plan, masks.as_deref())?;
                    let value = g.value(loss).item() as f64;
                    (value, g.backward(loss)?)
                };
                adam.step(&mut model.params, &grads);
                report.trace.push(TraceRow {
                    stage: index,
                    epoch,
                    step,
                    loss,
                });
            }
        }
    }
    Ok(report)
}

/// Trailing moving average over `window` values; the first entries average
/// over what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}
