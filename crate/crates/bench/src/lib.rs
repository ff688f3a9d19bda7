//! Configuration-driven experiments over the decoders: logical error rate
//! sweeps, per-round fits, decode-time distributions and mask ablations.

pub mod ablation;
pub mod config;
pub mod decoder;
pub mod fit;
pub mod ler;
pub mod report;
pub mod timing;

pub use ablation::{run_mask_ablation, AblationReport};
pub use config::{CodeSpec, DecoderSpec, ExperimentConfig, ModelSpec, TrainingConfig};
pub use decoder::{BuiltDecoder, DecodeOutcome, PreparedDecoder};
pub use fit::{fit_ler_per_round, LinearFit};
pub use ler::{run_ler_experiment, ExperimentReport, LerRow};
pub use timing::{run_timing_experiment, summarize, TimingLabel, TimingReport, TimingSample, TimingSummary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("a linear fit needs at least two distinct round counts, got {0} points")]
    TooFewPoints(usize),
    #[error(transparent)]
    Core(#[from] bbdec_core::CoreError),
    #[error(transparent)]
    Ml(#[from] bbdec_ml::MlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Seed for sub-experiment `index`, derived from the experiment seed so that
/// sub-experiments draw from independent streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng.next_u64()
}
