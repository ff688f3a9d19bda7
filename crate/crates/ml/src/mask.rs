//! Additive attention masks derived from the detector error model.
//!
//! Entry `(i, j)` is the logarithm of the number of mechanisms that flip
//! both detector `i` and detector `j`, or `-inf` when there are none.

use bbdec_core::sim::DetectorErrorModel;
use bbdec_nn::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct CodeAwareMask {
    pub num_detectors: usize,
    pub layer_width: usize,
    /// Row-major `num_detectors x num_detectors` matrix over the whole DEM.
    pub full: Vec<f64>,
    /// One `layer_width x layer_width` block per detector layer, indexed by
    /// slot. Slots without a detector, and detectors that no mechanism
    /// flips, read 0 on the diagonal and `-inf` elsewhere in their row and
    /// column.
    pub layers: Vec<Vec<f64>>,
}

pub fn build_code_aware_mask(dem: &DetectorErrorModel) -> CodeAwareMask {
    let n = dem.num_detectors;
    let mut counts = vec![0u32; n * n];
    for m in &dem.mechanisms {
        for &i in &m.detectors {
            for &j in &m.detectors {
                counts[i * n + j] += 1;
            }
        }
    }
    let log = |c: u32| if c == 0 { f64::NEG_INFINITY } else { (c as f64).ln() };
    let full: Vec<f64> = counts.iter().map(|&c| log(c)).collect();

    let w = dem.layer_width;
    let mut slot_owner: Vec<Vec<Option<usize>>> = vec![vec![None; w]; dem.num_layers];
    for (i, c) in dem.coords.iter().enumerate() {
        slot_owner[c.layer][c.slot] = Some(i);
    }
    let layers = slot_owner
        .iter()
        .map(|owners| {
            let mut block = vec![f64::NEG_INFINITY; w * w];
            for a in 0..w {
                for b in 0..w {
                    if let (Some(i), Some(j)) = (owners[a], owners[b]) {
                        block[a * w + b] = full[i * n + j];
                    }
                }
                if block[a * w + a] == f64::NEG_INFINITY {
                    for b in 0..w {
                        block[a * w + b] = f64::NEG_INFINITY;
                        block[b * w + a] = f64::NEG_INFINITY;
                    }
                    block[a * w + a] = 0.0;
                }
            }
            block
        })
        .collect();
    CodeAwareMask {
        num_detectors: n,
        layer_width: w,
        full,
        layers,
    }
}

impl CodeAwareMask {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.full[i * self.num_detectors + j]
    }

    pub fn layer_tensors<T: Scalar>(&self) -> Vec<Tensor<T>> {
        self.layers
            .iter()
            .map(|block| {
                let data = block.iter().map(|&v| T::lit(v)).collect();
                Tensor::from_vec(&[self.layer_width, self.layer_width], data).expect("square block")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bbdec_core::circuit::{annotate_noise, build_memory_circuit, CnotSchedule};
    use bbdec_core::code::CssCode;
    use bbdec_core::sim::build_dem;

    fn rep_dem(d: usize, rounds: usize) -> DetectorErrorModel {
        let code = CssCode::repetition(d).unwrap();
        let schedule = CnotSchedule::default_for(&code);
        let circuit = build_memory_circuit(&code, rounds, &schedule).unwrap();
        build_dem(&annotate_noise(circuit, 0.01).unwrap())
    }

    #[test]
    fn diagonal_is_log_of_incident_mechanisms() {
        let dem = rep_dem(5, 2);
        let mask = build_code_aware_mask(&dem);
        for i in 0..dem.num_detectors {
            let w = dem.mechanisms.iter().filter(|m| m.detectors.contains(&i)).count();
            if w == 0 {
                assert_eq!(mask.get(i, i), f64::NEG_INFINITY);
            } else {
                assert!((mask.get(i, i) - (w as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pairs_without_shared_mechanisms_are_blocked() {
        let dem = rep_dem(5, 2);
        let mask = build_code_aware_mask(&dem);
        let mut blocked = 0;
        for i in 0..dem.num_detectors {
            for j in 0..dem.num_detectors {
                let shared = dem
                    .mechanisms
                    .iter()
                    .any(|m| m.detectors.contains(&i) && m.detectors.contains(&j));
                assert_eq!(mask.get(i, j) == f64::NEG_INFINITY, !shared);
                blocked += (!shared) as usize;
            }
        }
        assert!(blocked > 0);
    }

    #[test]
    fn padded_slots_attend_only_to_themselves() {
        let code = CssCode::repetition(3).unwrap();
        let schedule = CnotSchedule::default_for(&code);
        let circuit = build_memory_circuit(&code, 1, &schedule).unwrap();
        let mut dem = build_dem(&annotate_noise(circuit, 0.01).unwrap());
        // Drop detector 0 so that its slot in layer 0 becomes padding.
        dem = bbdec_core::sim::restrict_dem(&dem, |i, _| i != 0);
        let mask = build_code_aware_mask(&dem);
        let w = mask.layer_width;
        let block = &mask.layers[0];
        assert_eq!(block[0], 0.0);
        for b in 1..w {
            assert_eq!(block[b], f64::NEG_INFINITY);
            assert_eq!(block[b * w], f64::NEG_INFINITY);
        }
    }
}
