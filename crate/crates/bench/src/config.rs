use crate::{BenchError, Result};
use bbdec_core::bposd::BpConfig;
use bbdec_core::circuit::{annotate_noise, build_memory_circuit, CnotSchedule};
use bbdec_core::code::{build_bb_code, CodePreset, CssCode, Monomial};
use bbdec_core::sim::{build_dem, DetectorErrorModel};
use bbdec_ml::{train_curriculum, CircuitSource, Model, ModelConfig, StageConfig, TrainingReport};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeSpec {
    Preset { name: CodePreset },
    Repetition { distance: usize },
    Bivariate { l: usize, m: usize, a: Vec<Monomial>, b: Vec<Monomial> },
}

impl CodeSpec {
    /// The code and its syndrome-extraction schedule.
    pub fn build(&self) -> Result<(CssCode, CnotSchedule)> {
        Ok(match self {
            CodeSpec::Preset { name } => (name.build(), name.schedule()),
            CodeSpec::Repetition { distance } => {
                let code = CssCode::repetition(*distance)?;
                let schedule = CnotSchedule::default_for(&code);
                (code, schedule)
            }
            CodeSpec::Bivariate { l, m, a, b } => {
                let code = build_bb_code(*l, *m, a, b)?;
                let schedule = CnotSchedule::bivariate_bicycle(*l, *m, a, b)
                    .and_then(|s| s.validate(&code).map(|_| s))
                    .unwrap_or_else(|_| CnotSchedule::default_for(&code));
                (code, schedule)
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            CodeSpec::Preset { name } => name.to_string(),
            CodeSpec::Repetition { distance } => format!("rep{distance}"),
            CodeSpec::Bivariate { l, m, .. } => format!("bb-{l}x{m}"),
        }
    }
}

impl std::str::FromStr for CodeSpec {
    type Err = BenchError;

    /// Accepts a preset name or `repN` for the distance-`N` repetition code.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(d) = s.strip_prefix("rep") {
            let distance = d
                .parse()
                .map_err(|_| BenchError::Config(format!("bad repetition distance in `{s}`")))?;
            return Ok(CodeSpec::Repetition { distance });
        }
        Ok(CodeSpec::Preset { name: s.parse()? })
    }
}

/// Full circuit-level DEM of a memory experiment.
pub fn experiment_dem(code: &CssCode, schedule: &CnotSchedule, rounds: usize, p: f64) -> Result<DetectorErrorModel> {
    let circuit = build_memory_circuit(code, rounds, schedule)?;
    Ok(build_dem(&annotate_noise(circuit, p)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderSpec {
    Bposd {
        #[serde(default)]
        bp: BpConfig,
        #[serde(default)]
        osd_order: usize,
    },
    Ml {
        checkpoint: PathBuf,
    },
    Oracle,
}

impl DecoderSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderSpec::Bposd { .. } => "bposd",
            DecoderSpec::Ml { .. } => "ml",
            DecoderSpec::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub rounds: usize,
    pub p: Vec<f64>,
    pub shots: usize,
    pub decoder: DecoderSpec,
    /// Decode from X-check detectors only. Defaults to on for BP-OSD and off
    /// otherwise; the ML decoder always reads every detector.
    #[serde(default)]
    pub x_only: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(BenchError::Config("shots must be at least 1".into()));
        }
        if self.p.is_empty() {
            return Err(BenchError::Config("no error rates given".into()));
        }
        if let Some(p) = self.p.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(BenchError::Config(format!("error rate {p} outside [0, 1)")));
        }
        if matches!(self.decoder, DecoderSpec::Ml { .. }) && self.x_only == Some(true) {
            return Err(BenchError::Config("the ML decoder reads both check types; X-only restriction is not available".into()));
        }
        Ok(())
    }

    pub fn effective_x_only(&self) -> bool {
        match self.decoder {
            DecoderSpec::Bposd { .. } => self.x_only.unwrap_or(true),
            DecoderSpec::Ml { .. } => false,
            DecoderSpec::Oracle => self.x_only.unwrap_or(false),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Model hyperparameters; the detector width and logical count come from
/// the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub code_aware_mask: bool,
}

fn default_dropout() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn toy() -> Self {
        Self::from_config(&ModelConfig::toy(1, 1))
    }

    pub fn full() -> Self {
        Self::from_config(&ModelConfig::full(1, 1))
    }

    fn from_config(c: &ModelConfig) -> Self {
        ModelSpec {
            d_model: c.d_model,
            d_ff: c.d_ff,
            heads: c.heads,
            encoder_layers: c.encoder_layers,
            decoder_layers: c.decoder_layers,
            dropout: c.dropout,
            code_aware_mask: c.code_aware_mask,
        }
    }

    pub fn resolve(&self, code: &CssCode) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            d_ff: self.d_ff,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            detectors_per_layer: code.num_x_checks() + code.num_z_checks(),
            logicals: code.k,
            dropout: self.dropout,
            code_aware_mask: self.code_aware_mask,
        }
    }
}

/// A model architecture, a code to train it on and a curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub code: CodeSpec,
    pub model: ModelSpec,
    pub stages: Vec<StageConfig>,
    /// Seeds both the initial parameters and the training randomness.
    #[serde(default)]
    pub seed: u64,
}

impl TrainingConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn train(&self) -> Result<(Model<f32>, TrainingReport)> {
        let (code, schedule) = self.code.build()?;
        let mut model = Model::<f32>::new(self.model.resolve(&code), self.seed)?;
        let source = CircuitSource { code, schedule };
        let report = train_curriculum(&mut model, &self.stages, &source, self.seed)?;
        Ok((model, report))
    }
}
