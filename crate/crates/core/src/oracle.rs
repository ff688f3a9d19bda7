//! Exact maximum-likelihood decoding of small detector error models.
//!
//! Two independent routes: brute-force enumeration of every fault
//! configuration, and a dynamic program over `(syndrome, logical flips)`
//! that folds in one mechanism at a time.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::gf2::BitVec;
use crate::sim::DetectorErrorModel;
use crate::CoreError;

pub const MAX_ENUMERATED_MECHANISMS: usize = 24;
pub const MAX_TABLE_BITS: usize = 24;

/// Posterior mass per logical-flip class for one syndrome, sorted
/// lexicographically by the flip vector (bit 0 first).
#[derive(Debug, Clone, PartialEq)]
pub struct CosetTable {
    pub entries: Vec<(BitVec, f64)>,
}

impl CosetTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most likely flips; ties resolve to the lexicographically smallest.
    pub fn argmax(&self) -> Option<&BitVec> {
        let mut best: Option<&(BitVec, f64)> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.1 > b.1) {
                best = Some(e);
            }
        }
        best.map(|b| &b.0)
    }

    pub fn mass(&self, flips: &BitVec) -> f64 {
        self.entries.iter().find(|e| &e.0 == flips).map_or(0.0, |e| e.1)
    }
}

fn lexicographic(a: &BitVec, b: &BitVec) -> Ordering {
    a.to_bits().cmp(&b.to_bits())
}

fn mask_to_bits(mask: u64, len: usize) -> BitVec {
    BitVec::from_ones(len, (0..len).filter(|&i| mask >> i & 1 == 1))
}

fn signature_masks(dem: &DetectorErrorModel) -> Result<Vec<(u128, u64)>, CoreError> {
    if dem.num_detectors > 128 || dem.num_logicals > 64 {
        return Err(CoreError::TooLarge {
            what: "detector count",
            got: dem.num_detectors,
            limit: 128,
        });
    }
    Ok(dem
        .mechanisms
        .iter()
        .map(|m| {
            let d = m.detectors.iter().fold(0u128, |acc, &i| acc | 1 << i);
            let l = m.logicals.iter().fold(0u64, |acc, &i| acc | 1 << i);
            (d, l)
        })
        .collect())
}

fn detector_mask(d: &BitVec) -> u128 {
    d.iter_ones().fold(0u128, |acc, i| acc | 1 << i)
}

fn table_from(masses: HashMap<u64, f64>, num_logicals: usize) -> CosetTable {
    let total: f64 = masses.values().sum();
    let mut entries: Vec<(BitVec, f64)> = masses
        .into_iter()
        .filter(|e| e.1 > 0.0)
        .map(|(l, m)| (mask_to_bits(l, num_logicals), m / total))
        .collect();
    entries.sort_by(|a, b| lexicographic(&a.0, &b.0));
    CosetTable { entries }
}

/// Visits every fault configuration in Gray-code order with its
/// probability, syndrome and logical flips.
fn enumerate(dem: &DetectorErrorModel, mut visit: impl FnMut(u128, u64, f64)) -> Result<(), CoreError> {
    let n = dem.mechanisms.len();
    if n > MAX_ENUMERATED_MECHANISMS {
        return Err(CoreError::TooLarge {
            what: "mechanism count",
            got: n,
            limit: MAX_ENUMERATED_MECHANISMS,
        });
    }
    let sigs = signature_masks(dem)?;
    let probs = dem.priors();
    let base: f64 = probs.iter().map(|&p| (1.0 - p).ln()).sum();
    let odds: Vec<f64> = probs.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
    let (mut d, mut l, mut logp) = (0u128, 0u64, base);
    let mut fired = 0u32;
    visit(d, l, logp.exp());
    for step in 1u32..(1u32 << n) {
        let j = step.trailing_zeros() as usize;
        fired ^= 1 << j;
        d ^= sigs[j].0;
        l ^= sigs[j].1;
        if fired >> j & 1 == 1 {
            logp += odds[j];
        } else {
            logp -= odds[j];
        }
        visit(d, l, logp.exp());
    }
    Ok(())
}

/// `p(e_L | d)` by summing over every fault configuration with syndrome
/// `d`. An empty table means the syndrome is impossible.
pub fn exact_posterior(dem: &DetectorErrorModel, d: &BitVec) -> Result<CosetTable, CoreError> {
    let target = detector_mask(d);
    let mut masses: HashMap<u64, f64> = HashMap::new();
    enumerate(dem, |syn, l, p| {
        if syn == target {
            *masses.entry(l).or_default() += p;
        }
    })?;
    Ok(table_from(masses, dem.num_logicals))
}

/// Maximum-likelihood logical flips for `d`.
pub fn exact_mld(dem: &DetectorErrorModel, d: &BitVec) -> Result<Option<BitVec>, CoreError> {
    Ok(exact_posterior(dem, d)?.argmax().cloned())
}

/// The full joint distribution `P(d, e_L)`.
#[derive(Debug, Clone)]
pub struct JointTable {
    num_logicals: usize,
    masses: HashMap<(u128, u64), f64>,
}

impl JointTable {
    /// Exhaustive enumeration over all `2^N_E` fault configurations.
    pub fn by_enumeration(dem: &DetectorErrorModel) -> Result<Self, CoreError> {
        let mut masses: HashMap<(u128, u64), f64> = HashMap::new();
        enumerate(dem, |d, l, p| *masses.entry((d, l)).or_default() += p)?;
        Ok(Self {
            num_logicals: dem.num_logicals,
            masses,
        })
    }

    /// Folds mechanisms in one at a time; cost scales with the number of
    /// reachable `(d, e_L)` pairs rather than with `2^N_E`.
    pub fn by_dynamic_programming(dem: &DetectorErrorModel) -> Result<Self, CoreError> {
        let bits = dem.num_detectors + dem.num_logicals;
        if bits > MAX_TABLE_BITS {
            return Err(CoreError::TooLarge {
                what: "detector plus logical count",
                got: bits,
                limit: MAX_TABLE_BITS,
            });
        }
        let sigs = signature_masks(dem)?;
        let mut masses: HashMap<(u128, u64), f64> = HashMap::from([((0, 0), 1.0)]);
        for (m, &(sd, sl)) in dem.mechanisms.iter().zip(&sigs) {
            let p = m.probability;
            let mut next: HashMap<(u128, u64), f64> = HashMap::with_capacity(masses.len() * 2);
            for (&(d, l), &mass) in &masses {
                *next.entry((d, l)).or_default() += mass * (1.0 - p);
                *next.entry((d ^ sd, l ^ sl)).or_default() += mass * p;
            }
            masses = next;
        }
        Ok(Self {
            num_logicals: dem.num_logicals,
            masses,
        })
    }

    pub fn probability(&self, d: &BitVec, flips: &BitVec) -> f64 {
        let l = flips.iter_ones().fold(0u64, |acc, i| acc | 1 << i);
        self.masses.get(&(detector_mask(d), l)).copied().unwrap_or(0.0)
    }

    pub fn posterior(&self, d: &BitVec) -> CosetTable {
        let target = detector_mask(d);
        let masses = self
            .masses
            .iter()
            .filter(|((syn, _), _)| *syn == target)
            .map(|(&(_, l), &m)| (l, m))
            .collect();
        table_from(masses, self.num_logicals)
    }

    pub fn mld(&self, d: &BitVec) -> Option<BitVec> {
        self.posterior(d).argmax().cloned()
    }

    /// Probability that the maximum-likelihood decision is wrong,
    /// `1 - Σ_d max_{e_L} P(d, e_L)`.
    pub fn mld_error_rate(&self) -> f64 {
        let mut best: HashMap<u128, f64> = HashMap::new();
        for (&(d, _), &m) in &self.masses {
            let b = best.entry(d).or_insert(0.0);
            if m > *b {
                *b = m;
            }
        }
        1.0 - best.values().sum::<f64>()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.values().sum()
    }

    /// `(d, e_L, probability)` rows sorted by syndrome then flips, for audit
    /// dumps.
    pub fn to_csv(&self, num_detectors: usize) -> String {
        let mut rows: Vec<(BitVec, BitVec, f64)> = self
            .masses
            .iter()
            .map(|(&(d, l), &m)| {
                (
                    BitVec::from_ones(num_detectors, (0..num_detectors).filter(|&i| d >> i & 1 == 1)),
                    mask_to_bits(l, self.num_logicals),
                    m,
                )
            })
            .collect();
        rows.sort_by(|a, b| lexicographic(&a.0, &b.0).then(lexicographic(&a.1, &b.1)));
        let mut out = String::from("detectors,logical_flips,probability\n");
        for (d, l, m) in rows {
            out.push_str(&format!("{d},{l},{m}\n"));
        }
        out
    }
}

/// Precomputed maximum-likelihood decisions for every reachable syndrome.
#[derive(Debug, Clone)]
pub struct MldLookup {
    decisions: HashMap<u128, BitVec>,
}

impl MldLookup {
    pub fn new(table: &JointTable) -> Self {
        let mut grouped: HashMap<u128, Vec<(u64, f64)>> = HashMap::new();
        for (&(d, l), &m) in &table.masses {
            grouped.entry(d).or_default().push((l, m));
        }
        let decisions = grouped
            .into_iter()
            .map(|(d, masses)| (d, table_from(masses.into_iter().collect(), table.num_logicals)))
            .filter_map(|(d, t)| t.argmax().cloned().map(|b| (d, b)))
            .collect();
        Self { decisions }
    }

    /// `None` for syndromes the model cannot produce.
    pub fn decode(&self, d: &BitVec) -> Option<&BitVec> {
        self.decisions.get(&detector_mask(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CheckBasis;
    use crate::sim::{sample_shots, DetectorCoord, Mechanism};
    use proptest::prelude::*;

    fn dem_from(nd: usize, nl: usize, mechs: &[(f64, &[usize], &[usize])]) -> DetectorErrorModel {
        DetectorErrorModel {
            num_detectors: nd,
            num_logicals: nl,
            num_layers: 1,
            layer_width: nd,
            coords: (0..nd)
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

    fn repetition_dem(p: f64) -> DetectorErrorModel {
        dem_from(2, 1, &[(p, &[0], &[0]), (p, &[0, 1], &[]), (p, &[1], &[])])
    }

    #[test]
    fn single_mechanism_posterior() {
        let dem = dem_from(2, 2, &[(0.1, &[0, 1], &[1])]);
        let t = exact_posterior(&dem, &BitVec::from_bits(&[1, 1])).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[0].0.to_bits(), vec![0, 1]);
        assert!((t.entries[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(exact_mld(&dem, &BitVec::from_bits(&[1, 1])).unwrap().unwrap().to_bits(), vec![0, 1]);
    }

    #[test]
    fn impossible_syndrome_gives_empty_table() {
        let dem = dem_from(2, 1, &[(0.1, &[0, 1], &[0])]);
        let t = exact_posterior(&dem, &BitVec::from_bits(&[1, 0])).unwrap();
        assert!(t.is_empty());
        assert!(exact_mld(&dem, &BitVec::from_bits(&[1, 0])).unwrap().is_none());
    }

    #[test]
    fn repetition_posteriors_match_hand_computation() {
        let p: f64 = 0.05;
        let q = 1.0 - p;
        let dem = repetition_dem(p);
        // Syndrome -> (mass of e_L = 0, mass of e_L = 1), unnormalized.
        let cases = [
            ([0, 0], q * q * q, p * p * p),
            ([1, 0], p * p * q, p * q * q),
            ([0, 1], p * q * q, p * p * q),
            ([1, 1], p * q * q, p * p * q),
        ];
        for (bits, m0, m1) in cases {
            let t = exact_posterior(&dem, &BitVec::from_bits(&bits)).unwrap();
            let z = m0 + m1;
            assert!((t.mass(&BitVec::from_bits(&[0])) - m0 / z).abs() < 1e-12, "{bits:?}");
            assert!((t.mass(&BitVec::from_bits(&[1])) - m1 / z).abs() < 1e-12, "{bits:?}");
        }
    }

    #[test]
    fn repetition_mld_is_majority_vote() {
        let dem = repetition_dem(0.05);
        for e in 0u8..8 {
            let bits: Vec<u8> = (0..3).map(|i| e >> i & 1).collect();
            let d = BitVec::from_bits(&[bits[0] ^ bits[1], bits[1] ^ bits[2]]);
            let mld = exact_mld(&dem, &d).unwrap().unwrap();
            // Majority vote picks the lighter of e and its complement; the
            // predicted flip is that choice's bit 0.
            let majority = (bits.iter().filter(|&&b| b == 1).count() >= 2) as u8;
            assert_eq!(mld.to_bits(), vec![bits[0] ^ majority], "e = {bits:?}");
        }
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let dem = dem_from(1, 2, &[(0.2, &[0], &[0]), (0.2, &[0], &[1])]);
        let d = BitVec::from_bits(&[1]);
        let t = exact_posterior(&dem, &d).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert!((t.entries[0].1 - t.entries[1].1).abs() < 1e-15);
        // [0,1] precedes [1,0].
        assert_eq!(exact_mld(&dem, &d).unwrap().unwrap().to_bits(), vec![0, 1]);
    }

    #[test]
    fn cap_enforced() {
        let mechs: Vec<(f64, &[usize], &[usize])> = (0..25).map(|_| (0.1, &[0usize][..], &[][..])).collect();
        let dem = dem_from(1, 0, &mechs);
        assert!(matches!(
            exact_posterior(&dem, &BitVec::zeros(1)),
            Err(CoreError::TooLarge { .. })
        ));
    }

    #[test]
    fn monte_carlo_matches_joint_table() {
        let dem = dem_from(
            3,
            1,
            &[
                (0.1, &[0], &[0]),
                (0.15, &[0, 1], &[]),
                (0.05, &[1, 2], &[0]),
                (0.2, &[2], &[]),
            ],
        );
        let table = JointTable::by_enumeration(&dem).unwrap();
        let n = 100_000;
        let mut counts: HashMap<(Vec<u8>, Vec<u8>), usize> = HashMap::new();
        for s in sample_shots(&dem, n, 17) {
            *counts.entry((s.detectors.to_bits(), s.logical_flips.to_bits())).or_default() += 1;
        }
        for ((d, l), &p) in table.masses.iter() {
            let dv = BitVec::from_ones(3, (0..3).filter(|&i| d >> i & 1 == 1));
            let lv = mask_to_bits(*l, 1);
            let observed = counts.get(&(dv.to_bits(), lv.to_bits())).copied().unwrap_or(0) as f64;
            let expected = p * n as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((observed - expected).abs() <= 4.0 * sigma + 1e-9, "{d} {l}: {observed} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn enumeration_and_dynamic_programming_agree(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ne = rng.random_range(1..10);
            let mut dem = dem_from(4, 2, &[]);
            dem.mechanisms = (0..ne)
                .map(|_| Mechanism {
                    probability: rng.random_range(0.01..0.5),
                    detectors: (0..4).filter(|_| rng.random_bool(0.4)).collect(),
                    logicals: (0..2).filter(|_| rng.random_bool(0.3)).collect(),
                })
                .collect();
            let a = JointTable::by_enumeration(&dem).unwrap();
            let b = JointTable::by_dynamic_programming(&dem).unwrap();
            prop_assert!((a.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((b.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!((a.mld_error_rate() - b.mld_error_rate()).abs() < 1e-12);
            let lookup = MldLookup::new(&b);
            for mask in 0u8..16 {
                let d = BitVec::from_ones(4, (0..4).filter(|&i| mask >> i & 1 == 1));
                let direct = exact_posterior(&dem, &d).unwrap();
                let sum: f64 = direct.entries.iter().map(|e| e.1).sum();
                prop_assert!(direct.is_empty() || (sum - 1.0).abs() < 1e-12);
                let via_table = b.posterior(&d);
                prop_assert_eq!(direct.entries.len(), via_table.entries.len());
                for (x, y) in direct.entries.iter().zip(&via_table.entries) {
                    prop_assert_eq!(&x.0, &y.0);
                    prop_assert!((x.1 - y.1).abs() < 1e-9);
                }
                prop_assert_eq!(direct.argmax(), via_table.argmax());
                prop_assert_eq!(direct.argmax(), lookup.decode(&d));
                // Reordering mechanisms leaves the decision unchanged.
                let mut reversed = dem.clone();
                reversed.mechanisms.reverse();
                prop_assert_eq!(exact_mld(&reversed, &d).unwrap(), exact_mld(&dem, &d).unwrap());
            }
        }
    }
}
