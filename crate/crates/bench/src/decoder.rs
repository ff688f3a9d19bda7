use crate::config::DecoderSpec;
use crate::timing::TimingLabel;
use crate::Result;
use bbdec_core::bposd::{BpOsdDecoder, OsdConfig};
use bbdec_core::gf2::BitVec;
use bbdec_core::oracle::{JointTable, MldLookup};
use bbdec_core::sim::{x_only, DetectorErrorModel};
use bbdec_core::circuit::CheckBasis;
use bbdec_ml::{IterationPlan, MlDecoder, Model};
use rayon::prelude::*;

/// Shots per batched ML inference call.
const ML_CHUNK: usize = 256;

pub enum BuiltDecoder {
    Bposd(BpOsdDecoder),
    Ml(MlDecoder),
    Oracle { lookup: MldLookup, num_logicals: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub logical_flips: BitVec,
    pub label: TimingLabel,
}

/// A decoder together with the detector subset it reads.
pub struct PreparedDecoder {
    pub decoder: BuiltDecoder,
    /// Indices into the full detector vector, in decoder order; `None`
    /// reads every detector.
    pub projection: Option<Vec<usize>>,
}

impl PreparedDecoder {
    /// Builds the decoder for `dem`, restricting BP-OSD and the oracle to
    /// X-check detectors when `restrict_to_x` is set.
    pub fn build(spec: &DecoderSpec, dem: &DetectorErrorModel, restrict_to_x: bool, ml_model: Option<&(Model<f32>, IterationPlan)>) -> Result<Self> {
        let (view, projection) = if restrict_to_x && !matches!(spec, DecoderSpec::Ml { .. }) {
            let keep = dem
                .coords
                .iter()
                .enumerate()
                .filter(|(_, c)| c.basis == CheckBasis::X)
                .map(|(i, _)| i)
                .collect();
            (x_only(dem), Some(keep))
        } else {
            (dem.clone(), None)
        };
        let decoder = match spec {
            DecoderSpec::Bposd { bp, osd_order } => BuiltDecoder::Bposd(BpOsdDecoder::new(&view, *bp, OsdConfig::new(*osd_order)?)?),
            DecoderSpec::Ml { checkpoint } => {
                let (model, plan) = match ml_model {
                    Some((m, p)) => (m.clone(), *p),
                    None => Model::load(checkpoint)?,
                };
                BuiltDecoder::Ml(MlDecoder::new(model, plan, &view)?)
            }
            DecoderSpec::Oracle => BuiltDecoder::Oracle {
                lookup: MldLookup::new(&JointTable::by_dynamic_programming(&view)?),
                num_logicals: view.num_logicals,
            },
        };
        Ok(PreparedDecoder { decoder, projection })
    }

    pub fn project(&self, detectors: &BitVec) -> BitVec {
        match &self.projection {
            None => detectors.clone(),
            Some(keep) => BitVec::from_bits(&keep.iter().map(|&i| detectors.get(i) as u8).collect::<Vec<_>>()),
        }
    }

    pub fn decode(&self, detectors: &BitVec) -> Result<DecodeOutcome> {
        self.decoder.decode(&self.project(detectors))
    }

    /// Predicted logical flips for every shot, in order.
    pub fn decode_all(&self, detectors: &[BitVec]) -> Result<Vec<BitVec>> {
        let projected: Vec<BitVec> = detectors.iter().map(|d| self.project(d)).collect();
        match &self.decoder {
            BuiltDecoder::Ml(ml) => {
                let chunks: Vec<Vec<BitVec>> = projected
                    .par_chunks(ML_CHUNK)
                    .map(|c| ml.decode_batch(c))
                    .collect::<std::result::Result<_, _>>()?;
                Ok(chunks.into_iter().flatten().collect())
            }
            other => projected
                .par_iter()
                .map(|d| other.decode(d).map(|o| o.logical_flips))
                .collect(),
        }
    }
}

impl BuiltDecoder {
    pub fn decode(&self, detectors: &BitVec) -> Result<DecodeOutcome> {
        Ok(match self {
            BuiltDecoder::Bposd(d) => {
                let out = d.decode(detectors)?;
                DecodeOutcome {
                    logical_flips: out.logical_flips,
                    label: if out.bp_converged {
                        TimingLabel::ConvergedBp
                    } else {
                        TimingLabel::OsdInvoked
                    },
                }
            }
            BuiltDecoder::Ml(d) => DecodeOutcome {
                logical_flips: d.decode(detectors)?,
                label: TimingLabel::Ml,
            },
            BuiltDecoder::Oracle { lookup, num_logicals } => DecodeOutcome {
                logical_flips: lookup
                    .decode(detectors)
                    .cloned()
                    .unwrap_or_else(|| BitVec::zeros(*num_logicals)),
                label: TimingLabel::Oracle,
            },
        })
    }
}
