use crate::config::TrainingConfig;
use crate::Result;
use bbdec_ml::train::moving_average;
use bbdec_ml::TrainingReport;
use serde::Serialize;
use std::fmt::Write;

pub const SMOOTHING_WINDOW: usize = 50;

/// Paired loss traces of two runs that differ only in the attention mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub stage: Vec<usize>,
    pub epoch: Vec<usize>,
    pub step: Vec<usize>,
    pub masked: Vec<f64>,
    pub unmasked: Vec<f64>,
    pub masked_smoothed: Vec<f64>,
    pub unmasked_smoothed: Vec<f64>,
}

impl AblationReport {
    fn from_traces(masked: &TrainingReport, unmasked: &TrainingReport) -> Self {
        let losses = |r: &TrainingReport| r.trace.iter().map(|t| t.loss).collect::<Vec<_>>();
        let (m, u) = (losses(masked), losses(unmasked));
        AblationReport {
            stage: masked.trace.iter().map(|t| t.stage).collect(),
            epoch: masked.trace.iter().map(|t| t.epoch).collect(),
            step: masked.trace.iter().map(|t| t.step).collect(),
            masked_smoothed: moving_average(&m, SMOOTHING_WINDOW),
            unmasked_smoothed: moving_average(&u, SMOOTHING_WINDOW),
            masked: m,
            unmasked: u,
        }
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    /// Last smoothed loss of the masked and unmasked runs.
    pub fn final_smoothed(&self) -> Option<(f64, f64)> {
        Some((*self.masked_smoothed.last()?, *self.unmasked_smoothed.last()?))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,epoch,step,masked_loss,unmasked_loss,masked_avg,unmasked_avg\n");
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.stage[i],
                self.epoch[i],
                self.step[i],
                self.masked[i],
                self.unmasked[i],
                self.masked_smoothed[i],
                self.unmasked_smoothed[i]
            )
            .unwrap();
        }
        out
    }
}

/// Trains the same model twice from the same seed, once with the code-aware
/// mask and once without.
pub fn run_mask_ablation(cfg: &TrainingConfig) -> Result<AblationReport> {
    let run = |mask: bool| -> Result<TrainingReport> {
        let mut cfg = cfg.clone();
        cfg.model.code_aware_mask = mask;
        Ok(cfg.train()?.1)
    };
    let masked = run(true)?;
    let unmasked = run(false)?;
    Ok(AblationReport::from_traces(&masked, &unmasked))
}
