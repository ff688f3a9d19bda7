use crate::config::{experiment_dem, DecoderSpec, ExperimentConfig};
use crate::decoder::PreparedDecoder;
use crate::{derive_seed, Result};
use bbdec_core::sim::sample_shots;
use bbdec_ml::Model;
use serde::Serialize;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LerRow {
    pub p: f64,
    pub shots: usize,
    pub errors: usize,
    pub rate: f64,
    pub stderr: f64,
    /// Rate per logical qubit per noisy round, `1 - (1 - rate)^(1 / (k N_R))`.
    pub per_qubit_per_round: Option<f64>,
    pub seed: u64,
}

impl LerRow {
    pub fn new(p: f64, shots: usize, errors: usize, logicals: usize, rounds: usize, seed: u64) -> Self {
        let rate = errors as f64 / shots as f64;
        let exponent = logicals * rounds;
        LerRow {
            p,
            shots,
            errors,
            rate,
            stderr: binomial_stderr(rate, shots),
            per_qubit_per_round: (exponent > 0).then(|| 1.0 - (1.0 - rate).powf(1.0 / exponent as f64)),
            seed,
        }
    }
}

/// One standard deviation of a binomial proportion estimate.
pub fn binomial_stderr(rate: f64, shots: usize) -> f64 {
    (rate * (1.0 - rate) / shots as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub code: String,
    pub rounds: usize,
    pub logicals: usize,
    pub decoder: String,
    pub x_only: bool,
    pub rows: Vec<LerRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,shots,errors,rate,stderr,per_qubit_per_round,seed\n");
        for r in &self.rows {
            let per_round = r.per_qubit_per_round.map_or(String::new(), |v| v.to_string());
            writeln!(out, "{},{},{},{},{},{},{}", r.p, r.shots, r.errors, r.rate, r.stderr, per_round, r.seed).unwrap();
        }
        out
    }
}

/// Samples `shots` memory experiments per error rate and counts shots whose
/// predicted logical flips differ from the true ones in any coordinate.
pub fn run_ler_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (code, schedule) = cfg.code.build()?;
    let restrict = cfg.effective_x_only();
    let ml_model = match &cfg.decoder {
        DecoderSpec::Ml { checkpoint } => Some(Model::load(checkpoint)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(cfg.p.len());
    for (i, &p) in cfg.p.iter().enumerate() {
        let dem = experiment_dem(&code, &schedule, cfg.rounds, p)?;
        let decoder = PreparedDecoder::build(&cfg.decoder, &dem, restrict, ml_model.as_ref())?;
        let seed = derive_seed(cfg.seed, i as u64);
        let shots = sample_shots(&dem, cfg.shots, seed);
        let detectors: Vec<_> = shots.iter().map(|s| s.detectors.clone()).collect();
        let predicted = decoder.decode_all(&detectors)?;
        let errors = shots
            .iter()
            .zip(&predicted)
            .filter(|(s, e)| s.logical_flips != **e)
            .count();
        rows.push(LerRow::new(p, cfg.shots, errors, code.k, cfg.rounds, seed));
    }
    Ok(ExperimentReport {
        code: cfg.code.label(),
        rounds: cfg.rounds,
        logicals: code.k,
        decoder: cfg.decoder.name().to_string(),
        x_only: restrict,
        rows,
    })
}
