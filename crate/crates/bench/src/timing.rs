use crate::config::{experiment_dem, DecoderSpec, ExperimentConfig};
use crate::decoder::PreparedDecoder;
use crate::{derive_seed, BenchError, Result};
use bbdec_core::sim::sample_shots;
use bbdec_ml::Model;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Instant;

/// Which decoding path a timed shot took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingLabel {
    ConvergedBp,
    OsdInvoked,
    Ml,
    Oracle,
}

impl TimingLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TimingLabel::ConvergedBp => "converged_bp",
            TimingLabel::OsdInvoked => "osd_invoked",
            TimingLabel::Ml => "ml",
            TimingLabel::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimingSample {
    pub nanos: u64,
    pub label: TimingLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingSummary {
    pub count: usize,
    pub min: u64,
    pub mean: f64,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
    /// Standard deviation over mean.
    pub cv: f64,
}

/// Nearest-rank percentiles of `nanos`; `None` for an empty slice.
pub fn summarize(nanos: &[u64]) -> Option<TimingSummary> {
    if nanos.is_empty() {
        return None;
    }
    let mut sorted = nanos.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    let mean = sorted.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = sorted.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    Some(TimingSummary {
        count: n,
        min: sorted[0],
        mean,
        p50: rank(0.5),
        p90: rank(0.9),
        p99: rank(0.99),
        max: sorted[n - 1],
        cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub code: String,
    pub rounds: usize,
    pub p: f64,
    pub decoder: String,
    pub samples: Vec<TimingSample>,
}

impl TimingReport {
    pub fn nanos(&self, label: Option<TimingLabel>) -> Vec<u64> {
        self.samples
            .iter()
            .filter(|s| label.is_none_or(|l| s.label == l))
            .map(|s| s.nanos)
            .collect()
    }

    pub fn overall(&self) -> Option<TimingSummary> {
        summarize(&self.nanos(None))
    }

    pub fn by_label(&self) -> BTreeMap<TimingLabel, TimingSummary> {
        let mut groups: BTreeMap<TimingLabel, Vec<u64>> = BTreeMap::new();
        for s in &self.samples {
            groups.entry(s.label).or_default().push(s.nanos);
        }
        groups
            .into_iter()
            .filter_map(|(l, v)| summarize(&v).map(|s| (l, s)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("shot,nanos,label\n");
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(out, "{i},{},{}", s.nanos, s.label.as_str()).unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("label,count,min,mean,p50,p90,p99,max,cv\n");
        let rows = self
            .overall()
            .map(|s| ("all", s))
            .into_iter()
            .chain(self.by_label().into_iter().map(|(l, s)| (l.as_str(), s)));
        for (name, s) in rows {
            writeln!(out, "{name},{},{},{},{},{},{},{},{}", s.count, s.min, s.mean, s.p50, s.p90, s.p99, s.max, s.cv).unwrap();
        }
        out
    }
}

/// Times single-shot decodes on one thread, first error rate of `cfg` only.
/// The clock covers the decode call and nothing else.
pub fn run_timing_experiment(cfg: &ExperimentConfig) -> Result<TimingReport> {
    cfg.validate()?;
    let &p = cfg.p.first().ok_or_else(|| BenchError::Config("no error rate given".into()))?;
    let (code, schedule) = cfg.code.build()?;
    let dem = experiment_dem(&code, &schedule, cfg.rounds, p)?;
    let ml_model = match &cfg.decoder {
        DecoderSpec::Ml { checkpoint } => Some(Model::load(checkpoint)?),
        _ => None,
    };
    let decoder = PreparedDecoder::build(&cfg.decoder, &dem, cfg.effective_x_only(), ml_model.as_ref())?;
    time_decoder(&decoder, &dem, cfg.shots, derive_seed(cfg.seed, 0)).map(|samples| TimingReport {
        code: cfg.code.label(),
        rounds: cfg.rounds,
        p,
        decoder: cfg.decoder.name().to_string(),
        samples,
    })
}

/// Per-shot decode times for `shots` fresh samples of `dem`.
pub fn time_decoder(
    decoder: &PreparedDecoder,
    dem: &bbdec_core::sim::DetectorErrorModel,
    shots: usize,
    seed: u64,
) -> Result<Vec<TimingSample>> {
    let inputs: Vec<_> = sample_shots(dem, shots, seed)
        .into_iter()
        .map(|s| decoder.project(&s.detectors))
        .collect();
    let mut samples = Vec::with_capacity(inputs.len());
    for d in &inputs {
        let start = Instant::now();
        let outcome = decoder.decoder.decode(d)?;
        let nanos = start.elapsed().as_nanos() as u64;
        samples.push(TimingSample {
            nanos,
            label: outcome.label,
        });
    }
    Ok(samples)
}
