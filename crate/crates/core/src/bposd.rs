//! Belief propagation with ordered-statistics post-processing on the
//! Tanner graph of a detector error model.

use serde::{Deserialize, Serialize};

use crate::gf2::{BitMatrix, BitVec};
use crate::sim::DetectorErrorModel;
use crate::CoreError;

pub const MAX_OSD_ORDER: usize = 15;
const LLR_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BpVariant {
    ProductSum,
    MinSum { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpSchedule {
    Parallel,
    Serial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub max_iterations: usize,
    pub variant: BpVariant,
    pub schedule: BpSchedule,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            variant: BpVariant::ProductSum,
            schedule: BpSchedule::Parallel,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.max_iterations == 0 {
            return Err(CoreError::TooLarge {
                what: "zero BP iterations; minimum",
                got: 0,
                limit: 1,
            });
        }
        if let BpVariant::MinSum { scale } = self.variant {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(CoreError::InvalidProbability(scale));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OsdConfig {
    pub order: usize,
}

impl OsdConfig {
    pub fn new(order: usize) -> Result<Self, CoreError> {
        if order > MAX_OSD_ORDER {
            return Err(CoreError::TooLarge {
                what: "OSD order",
                got: order,
                limit: MAX_OSD_ORDER,
            });
        }
        Ok(Self { order })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    pub marginals: Vec<f64>,
    pub hard: BitVec,
    pub converged: bool,
    /// Iterations run; on convergence, the iteration at which it happened.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub error: BitVec,
    pub logical_flips: BitVec,
    pub bp_converged: bool,
}

/// Edge-indexed Tanner graph: edges are grouped by check.
struct TannerGraph {
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    fn new(dem: &DetectorErrorModel) -> Self {
        let mut per_check: Vec<Vec<usize>> = vec![Vec::new(); dem.num_detectors];
        for (j, m) in dem.mechanisms.iter().enumerate() {
            for &d in &m.detectors {
                per_check[d].push(j);
            }
        }
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); dem.mechanisms.len()];
        for vars in per_check {
            for v in vars {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        Self {
            check_ptr,
            edge_var,
            var_edges,
        }
    }

    fn num_checks(&self) -> usize {
        self.check_ptr.len() - 1
    }
}

fn prior_llr(p: f64) -> f64 {
    ((1.0 - p) / p).ln().clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// A BP-OSD decoder bound to one detector error model.
pub struct BpOsdDecoder {
    graph: TannerGraph,
    check_matrix: BitMatrix,
    columns: Vec<Vec<usize>>,
    logicals: Vec<Vec<usize>>,
    priors: Vec<f64>,
    prior_llrs: Vec<f64>,
    num_logicals: usize,
    pub bp: BpConfig,
    pub osd: OsdConfig,
}

impl BpOsdDecoder {
    pub fn new(dem: &DetectorErrorModel, bp: BpConfig, osd: OsdConfig) -> Result<Self, CoreError> {
        bp.validate()?;
        OsdConfig::new(osd.order)?;
        let priors = dem.priors();
        Ok(Self {
            graph: TannerGraph::new(dem),
            check_matrix: dem.check_matrix(),
            columns: dem.mechanisms.iter().map(|m| m.detectors.clone()).collect(),
            logicals: dem.mechanisms.iter().map(|m| m.logicals.clone()).collect(),
            prior_llrs: priors.iter().map(|&p| prior_llr(p)).collect(),
            priors,
            num_logicals: dem.num_logicals,
            bp,
            osd,
        })
    }

    pub fn num_mechanisms(&self) -> usize {
        self.priors.len()
    }

    fn check_length(&self, d: &BitVec) -> Result<(), CoreError> {
        if d.len() != self.check_matrix.rows() {
            return Err(CoreError::LengthMismatch {
                expected: self.check_matrix.rows(),
                got: d.len(),
            });
        }
        Ok(())
    }

    /// Updates the outgoing messages of one check from its incoming ones.
    fn check_update(&self, incoming: &[f64], outgoing: &mut [f64], flip: bool, scratch: &mut Vec<f64>) {
        let sign = if flip { -1.0 } else { 1.0 };
        match self.bp.variant {
            BpVariant::ProductSum => {
                // scratch = [tanh(q_i / 2)..., prefix products...]
                let n = incoming.len();
                scratch.clear();
                scratch.extend(incoming.iter().map(|&q| (q / 2.0).tanh()));
                scratch.push(1.0);
                for i in 0..n {
                    let last = scratch[n + i];
                    scratch.push(last * scratch[i]);
                }
                let mut suffix = 1.0;
                for i in (0..n).rev() {
                    let prod = (scratch[n + i] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    outgoing[i] = (sign * 2.0 * prod.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                    suffix *= scratch[i];
                }
            }
            BpVariant::MinSum { scale } => {
                let mut neg = flip;
                let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
                for (i, &q) in incoming.iter().enumerate() {
                    neg ^= q < 0.0;
                    let a = q.abs();
                    if a < min1 {
                        (min2, min1, arg) = (min1, a, i);
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for (i, (&q, out)) in incoming.iter().zip(outgoing.iter_mut()).enumerate() {
                    let mag = if i == arg { min2 } else { min1 };
                    let negative = neg ^ (q < 0.0);
                    let v = scale * mag.min(LLR_CLAMP);
                    *out = if negative { -v } else { v };
                }
            }
        }
    }

    pub fn bp_decode(&self, d: &BitVec) -> Result<BpResult, CoreError> {
        self.check_length(d)?;
        let n = self.priors.len();
        let edges = self.graph.edge_var.len();
        let mut to_check: Vec<f64> = self.graph.edge_var.iter().map(|&v| self.prior_llrs[v]).collect();
        let mut to_var = vec![0.0; edges];
        let mut posterior = self.prior_llrs.clone();
        let mut hard = BitVec::zeros(n);
        let mut iterations = 0;
        let mut converged = false;
        let mut scratch = Vec::new();
        let mut incoming = Vec::new();
        let mut fresh = Vec::new();
        for it in 1..=self.bp.max_iterations {
            iterations = it;
            match self.bp.schedule {
                BpSchedule::Parallel => {
                    for c in 0..self.graph.num_checks() {
                        let r = self.graph.check_ptr[c]..self.graph.check_ptr[c + 1];
                        self.check_update(&to_check[r.clone()], &mut to_var[r], d.get(c), &mut scratch);
                    }
                    for v in 0..n {
                        let total: f64 =
                            self.prior_llrs[v] + self.graph.var_edges[v].iter().map(|&e| to_var[e]).sum::<f64>();
                        posterior[v] = total;
                        for &e in &self.graph.var_edges[v] {
                            to_check[e] = (total - to_var[e]).clamp(-LLR_CLAMP, LLR_CLAMP);
                        }
                    }
                }
                BpSchedule::Serial => {
                    for c in 0..self.graph.num_checks() {
                        let r = self.graph.check_ptr[c]..self.graph.check_ptr[c + 1];
                        incoming.clear();
                        incoming.extend(
                            r.clone()
                                .map(|e| (posterior[self.graph.edge_var[e]] - to_var[e]).clamp(-LLR_CLAMP, LLR_CLAMP)),
                        );
                        fresh.clear();
                        fresh.resize(incoming.len(), 0.0);
                        self.check_update(&incoming, &mut fresh, d.get(c), &mut scratch);
                        for (k, e) in r.enumerate() {
                            posterior[self.graph.edge_var[e]] = incoming[k] + fresh[k];
                            to_var[e] = fresh[k];
                        }
                    }
                }
            }
            hard = BitVec::from_ones(n, (0..n).filter(|&v| posterior[v] < 0.0));
            if self.check_matrix.mul_vec(&hard) == *d {
                converged = true;
                break;
            }
        }
        let marginals = posterior.iter().map(|&l| 1.0 / (1.0 + l.exp())).collect();
        Ok(BpResult {
            marginals,
            hard,
            converged,
            iterations,
        })
    }

    /// Ordered-statistics decoding from per-mechanism error probabilities.
    /// Always returns `ê` with `D·ê = d`.
    pub fn osd_decode(&self, d: &BitVec, marginals: &[f64]) -> Result<BitVec, CoreError> {
        self.check_length(d)?;
        let n = self.priors.len();
        if marginals.len() != n {
            return Err(CoreError::LengthMismatch {
                expected: n,
                got: marginals.len(),
            });
        }
        let probs: Vec<f64> = if marginals.iter().any(|m| m.is_nan()) {
            self.priors.clone()
        } else {
            marginals.to_vec()
        };
        let hard = BitVec::from_ones(n, (0..n).filter(|&j| probs[j] > 0.5));
        if self.check_matrix.mul_vec(&hard) == *d {
            return Ok(hard);
        }
        let llr: Vec<f64> = probs
            .iter()
            .map(|&p| prior_llr(p.clamp(1e-300, 1.0 - 1e-16)))
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| llr[a].total_cmp(&llr[b]).then(a.cmp(&b)));

        let rows = self.check_matrix.rows();
        let mut m = BitMatrix::zeros(rows, n + 1);
        for (col, &j) in order.iter().enumerate() {
            for &r in &self.columns[j] {
                m.set(r, col, true);
            }
        }
        for r in d.iter_ones() {
            m.set(r, n, true);
        }
        let pivots = m.rref_in_place();
        if pivots.last() == Some(&n) {
            return Err(CoreError::InconsistentSyndrome);
        }
        let rank = pivots.len();
        let mut is_pivot = vec![false; n];
        pivots.iter().for_each(|&c| is_pivot[c] = true);
        let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).take(self.osd.order).collect();

        let weight = |col: usize| llr[order[col]];
        let column = |col: usize| BitVec::from_ones(rank, (0..rank).filter(|&r| m.get(r, col)));
        let pivot_weights: Vec<f64> = pivots.iter().map(|&c| weight(c)).collect();
        let free_cols: Vec<BitVec> = free.iter().map(|&c| column(c)).collect();
        let cost_of = |pivot_bits: &BitVec, extra: f64| -> f64 {
            pivot_bits.iter_ones().map(|r| pivot_weights[r]).sum::<f64>() + extra
        };

        // Gray-code sweep over assignments of the free columns.
        let mut current = column(n);
        let mut extra = 0.0;
        let mut best_cost = cost_of(&current, 0.0);
        let mut best_assignment = 0u32;
        let mut assignment = 0u32;
        for step in 1u32..(1 << free.len()) {
            let bit = step.trailing_zeros() as usize;
            assignment ^= 1 << bit;
            current.xor_assign(&free_cols[bit]);
            if assignment >> bit & 1 == 1 {
                extra += weight(free[bit]);
            } else {
                extra -= weight(free[bit]);
            }
            let cost = cost_of(&current, extra);
            if cost < best_cost {
                best_cost = cost;
                best_assignment = assignment;
            }
        }

        let mut pivot_bits = column(n);
        let mut e = BitVec::zeros(n);
        for (i, &c) in free.iter().enumerate() {
            if best_assignment >> i & 1 == 1 {
                pivot_bits.xor_assign(&free_cols[i]);
                e.set(order[c], true);
            }
        }
        for r in pivot_bits.iter_ones() {
            e.set(order[pivots[r]], true);
        }
        debug_assert_eq!(self.check_matrix.mul_vec(&e), *d);
        Ok(e)
    }

    pub fn predict_logical_flips(&self, e: &BitVec) -> BitVec {
        let mut out = BitVec::zeros(self.num_logicals);
        for j in e.iter_ones() {
            self.logicals[j].iter().for_each(|&l| out.flip(l));
        }
        out
    }

    /// BP, then OSD unless BP converged.
    pub fn decode(&self, d: &BitVec) -> Result<Decoded, CoreError> {
        let bp = self.bp_decode(d)?;
        let error = if bp.converged {
            bp.hard
        } else {
            self.osd_decode(d, &bp.marginals)?
        };
        Ok(Decoded {
            logical_flips: self.predict_logical_flips(&error),
            error,
            bp_converged: bp.converged,
        })
    }

    /// `Σ_{e_j = 1} ln((1 - p_j) / p_j)` under the given probabilities.
    pub fn soft_weight(e: &BitVec, probs: &[f64]) -> f64 {
        e.iter_ones().map(|j| ((1.0 - probs[j]) / probs[j]).ln()).sum()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn check_matrix(&self) -> &BitMatrix {
        &self.check_matrix
    }
}

pub fn bp_decode(dem: &DetectorErrorModel, d: &BitVec, cfg: BpConfig) -> Result<BpResult, CoreError> {
    BpOsdDecoder::new(dem, cfg, OsdConfig::default())?.bp_decode(d)
}

pub fn osd_decode(
    dem: &DetectorErrorModel,
    d: &BitVec,
    marginals: &[f64],
    cfg: OsdConfig,
) -> Result<BitVec, CoreError> {
    BpOsdDecoder::new(dem, BpConfig::default(), cfg)?.osd_decode(d, marginals)
}

/// `L·ê` over GF(2).
pub fn predict_logical_flips(dem: &DetectorErrorModel, e: &BitVec) -> BitVec {
    let mut out = BitVec::zeros(dem.num_logicals);
    for j in e.iter_ones() {
        dem.mechanisms[j].logicals.iter().for_each(|&l| out.flip(l));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{annotate_noise, build_memory_circuit, CheckBasis, CnotSchedule};
    use crate::code::{CodePreset, CssCode};
    use crate::sim::{build_dem, sample_shots, x_only, DetectorCoord, Mechanism};
    use proptest::prelude::*;

    fn dem_from(num_detectors: usize, num_logicals: usize, mechs: &[(f64, &[usize], &[usize])]) -> DetectorErrorModel {
        DetectorErrorModel {
            num_detectors,
            num_logicals,
            num_layers: 1,
            layer_width: num_detectors,
            coords: (0..num_detectors)
                .map(|slot| DetectorCoord {
                    layer: 0,
                    slot,
                    basis: CheckBasis::X,
                })
                .collect(),
            mechanisms: mechs
                .iter()
                .map(|&(p, d, l)| Mechanism {
                    probability: p,
                    detectors: d.to_vec(),
                    logicals: l.to_vec(),
                })
                .collect(),
        }
    }

    /// Code-capacity 3-bit repetition code: bit flips on 3 bits, checks
    /// (0,1) and (1,2), logical = bit 0.
    fn repetition_dem(p: f64) -> DetectorErrorModel {
        dem_from(2, 1, &[(p, &[0], &[0]), (p, &[0, 1], &[]), (p, &[1], &[])])
    }

    fn brute_force_min_weight(dem: &DetectorErrorModel, d: &BitVec) -> BitVec {
        let n = dem.mechanisms.len();
        let h = dem.check_matrix();
        let probs = dem.priors();
        (0u32..1 << n)
            .map(|mask| BitVec::from_ones(n, (0..n).filter(|&j| mask >> j & 1 == 1)))
            .filter(|e| h.mul_vec(e) == *d)
            .min_by(|a, b| {
                BpOsdDecoder::soft_weight(a, &probs).total_cmp(&BpOsdDecoder::soft_weight(b, &probs))
            })
            .unwrap()
    }

    #[test]
    fn trivial_syndrome_converges_immediately() {
        let dem = repetition_dem(0.1);
        let r = bp_decode(&dem, &BitVec::zeros(2), BpConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.hard.is_zero());
        assert!(r.marginals.iter().all(|&m| (0.0..=1.0).contains(&m)));
    }

    #[test]
    fn single_mechanism_fires() {
        let dem = dem_from(2, 1, &[(0.2, &[0, 1], &[0])]);
        let r = bp_decode(&dem, &BitVec::from_bits(&[1, 1]), BpConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.hard.to_bits(), vec![1]);
    }

    #[test]
    fn bp_matches_ml_on_repetition_syndromes() {
        let dem = repetition_dem(0.05);
        let variants = [
            BpVariant::ProductSum,
            BpVariant::MinSum { scale: 1.0 },
            BpVariant::MinSum { scale: 0.625 },
        ];
        for variant in variants {
            for schedule in [BpSchedule::Parallel, BpSchedule::Serial] {
                let cfg = BpConfig {
                    max_iterations: 10,
                    variant,
                    schedule,
                };
                for bits in [[0, 0], [1, 0], [0, 1], [1, 1]] {
                    let d = BitVec::from_bits(&bits);
                    let r = bp_decode(&dem, &d, cfg).unwrap();
                    assert!(r.converged, "{variant:?} {schedule:?} {bits:?}");
                    assert_eq!(r.hard, brute_force_min_weight(&dem, &d));
                }
            }
        }
    }

    #[test]
    fn osd_order_sweep_never_worse() {
        // Two detectors, a degenerate pair of equally likely single flips and
        // a cheaper combined explanation.
        let dem = dem_from(
            3,
            1,
            &[
                (0.2, &[0, 1], &[0]),
                (0.2, &[1, 2], &[]),
                (0.01, &[0], &[]),
                (0.01, &[2], &[0]),
                (0.1, &[0, 2], &[]),
            ],
        );
        let priors = dem.priors();
        for mask in 0u8..8 {
            let d = BitVec::from_ones(3, (0..3).filter(|&i| mask >> i & 1 == 1));
            let consistent = dem.check_matrix().solve(&d).is_some();
            if !consistent {
                assert!(matches!(
                    osd_decode(&dem, &d, &priors, OsdConfig { order: 0 }),
                    Err(CoreError::InconsistentSyndrome)
                ));
                continue;
            }
            let e0 = osd_decode(&dem, &d, &priors, OsdConfig { order: 0 }).unwrap();
            let e3 = osd_decode(&dem, &d, &priors, OsdConfig { order: 3 }).unwrap();
            let h = dem.check_matrix();
            assert_eq!(h.mul_vec(&e0), d);
            assert_eq!(h.mul_vec(&e3), d);
            assert!(BpOsdDecoder::soft_weight(&e3, &priors) <= BpOsdDecoder::soft_weight(&e0, &priors) + 1e-12);
        }
    }

    #[test]
    fn osd_order_one_finds_cheaper_coset_representative() {
        // Most reliable ordering picks mechanism 0 (p = 0.3) then 1 (0.3) as
        // pivots; the syndrome [1,1] is explained more cheaply by mechanism 3.
        let dem = dem_from(
            2,
            1,
            &[
                (0.3, &[0], &[0]),
                (0.3, &[1], &[]),
                (0.25, &[0, 1], &[0]),
                (0.29, &[0, 1], &[]),
            ],
        );
        let priors = dem.priors();
        let d = BitVec::from_bits(&[1, 1]);
        let best = brute_force_min_weight(&dem, &d);
        let e0 = osd_decode(&dem, &d, &priors, OsdConfig { order: 0 }).unwrap();
        let e1 = osd_decode(&dem, &d, &priors, OsdConfig { order: 1 }).unwrap();
        assert_ne!(e0, best);
        assert_eq!(e1, best);
        assert_eq!(e1.to_bits(), vec![0, 0, 0, 1]);
    }

    #[test]
    fn osd_returns_consistent_hard_decision_unchanged() {
        let dem = repetition_dem(0.1);
        let d = BitVec::from_bits(&[1, 0]);
        let marginals = [0.9, 0.05, 0.05];
        let e = osd_decode(&dem, &d, &marginals, OsdConfig { order: 3 }).unwrap();
        assert_eq!(e.to_bits(), vec![1, 0, 0]);
    }

    #[test]
    fn order_cap_and_bad_configs_rejected() {
        assert!(OsdConfig::new(16).is_err());
        assert!(OsdConfig::new(15).is_ok());
        let dem = repetition_dem(0.1);
        let bad = BpConfig {
            max_iterations: 0,
            ..BpConfig::default()
        };
        assert!(BpOsdDecoder::new(&dem, bad, OsdConfig::default()).is_err());
        let bad = BpConfig {
            variant: BpVariant::MinSum { scale: 1.5 },
            ..BpConfig::default()
        };
        assert!(BpOsdDecoder::new(&dem, bad, OsdConfig::default()).is_err());
    }

    #[test]
    fn logical_prediction() {
        let dem = repetition_dem(0.1);
        assert!(predict_logical_flips(&dem, &BitVec::zeros(3)).is_zero());
        assert_eq!(predict_logical_flips(&dem, &BitVec::from_bits(&[1, 0, 0])).to_bits(), vec![1]);
    }

    #[test]
    fn logical_prediction_matches_matrix_multiply_on_bb72() {
        let code = CodePreset::Bb72.build();
        let c = build_memory_circuit(&code, 1, &CnotSchedule::default_for(&code)).unwrap();
        let dem = build_dem(&annotate_noise(c, 0.003).unwrap());
        let l = dem.logical_matrix();
        let dec = BpOsdDecoder::new(&dem, BpConfig::default(), OsdConfig::default()).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for _ in 0..20 {
            let e = BitVec::from_ones(
                dem.num_mechanisms(),
                (0..dem.num_mechanisms()).filter(|_| rand::Rng::random_bool(&mut rng, 0.01)),
            );
            assert_eq!(dec.predict_logical_flips(&e), l.mul_vec(&e));
            assert_eq!(predict_logical_flips(&dem, &e), l.mul_vec(&e));
        }
    }

    #[test]
    fn decoded_shots_satisfy_syndrome() {
        let code = CssCode::repetition(5).unwrap();
        let c = build_memory_circuit(&code, 3, &CnotSchedule::default_for(&code)).unwrap();
        let dem = x_only(&build_dem(&annotate_noise(c, 0.02).unwrap()));
        let dec = BpOsdDecoder::new(&dem, BpConfig::default(), OsdConfig { order: 2 }).unwrap();
        let h = dem.check_matrix();
        for shot in sample_shots(&dem, 500, 8) {
            let out = dec.decode(&shot.detectors).unwrap();
            assert_eq!(h.mul_vec(&out.error), shot.detectors);
        }
    }

    proptest! {
        #[test]
        fn osd_always_satisfies_syndrome(
            seed in any::<u64>(),
            order in 0usize..4,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let nd = 6;
            let ne = 12;
            let mechs: Vec<Mechanism> = (0..ne)
                .map(|_| Mechanism {
                    probability: rng.random_range(0.01..0.4),
                    detectors: (0..nd).filter(|_| rng.random_bool(0.35)).collect(),
                    logicals: vec![],
                })
                .collect();
            let mut dem = dem_from(nd, 0, &[]);
            dem.mechanisms = mechs;
            let e = BitVec::from_ones(ne, (0..ne).filter(|_| rng.random_bool(0.3)));
            let d = dem.check_matrix().mul_vec(&e);
            let marginals: Vec<f64> = (0..ne).map(|_| rng.random_range(0.001..0.999)).collect();
            let out = osd_decode(&dem, &d, &marginals, OsdConfig { order }).unwrap();
            prop_assert_eq!(dem.check_matrix().mul_vec(&out), d);
        }
    }
}
