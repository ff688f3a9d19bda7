//! Pauli-frame simulation, detector error models and shot sampling.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{CheckBasis, Fault, InstructionKind, MemoryCircuit, NoisyCircuit};
use crate::gf2::{BitMatrix, BitVec};
use crate::CoreError;

/// Shots per independently seeded sampling shard.
pub const SHARD_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorCoord {
    pub layer: usize,
    pub slot: usize,
    pub basis: CheckBasis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub probability: f64,
    pub detectors: Vec<usize>,
    pub logicals: Vec<usize>,
}

/// Combined probability that exactly one of two independent events fires.
pub fn merge_probability(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

/// Merges mechanisms with equal signatures in first-appearance order and
/// drops those that flip nothing or never fire.
pub fn merge_mechanisms(items: impl IntoIterator<Item = Mechanism>) -> Vec<Mechanism> {
    let mut index: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
    let mut out: Vec<Mechanism> = Vec::new();
    for m in items {
        if m.detectors.is_empty() && m.logicals.is_empty() {
            continue;
        }
        match index.get(&(m.detectors.clone(), m.logicals.clone())) {
            Some(&i) => out[i].probability = merge_probability(out[i].probability, m.probability),
            None => {
                index.insert((m.detectors.clone(), m.logicals.clone()), out.len());
                out.push(m);
            }
        }
    }
    out.retain(|m| m.probability > 0.0);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorErrorModel {
    pub num_detectors: usize,
    pub num_logicals: usize,
    pub num_layers: usize,
    pub layer_width: usize,
    pub coords: Vec<DetectorCoord>,
    pub mechanisms: Vec<Mechanism>,
}

impl DetectorErrorModel {
    pub fn num_mechanisms(&self) -> usize {
        self.mechanisms.len()
    }

    /// Detector incidence matrix `D` (detectors × mechanisms).
    pub fn check_matrix(&self) -> BitMatrix {
        let mut d = BitMatrix::zeros(self.num_detectors, self.mechanisms.len());
        for (j, m) in self.mechanisms.iter().enumerate() {
            for &i in &m.detectors {
                d.set(i, j, true);
            }
        }
        d
    }

    /// Logical incidence matrix `L` (logicals × mechanisms).
    pub fn logical_matrix(&self) -> BitMatrix {
        let mut l = BitMatrix::zeros(self.num_logicals, self.mechanisms.len());
        for (j, m) in self.mechanisms.iter().enumerate() {
            for &i in &m.logicals {
                l.set(i, j, true);
            }
        }
        l
    }

    pub fn priors(&self) -> Vec<f64> {
        self.mechanisms.iter().map(|m| m.probability).collect()
    }

    /// `(D·e, L·e)` for a set of fired mechanisms.
    pub fn outcome(&self, fired: impl IntoIterator<Item = usize>) -> Shot {
        let mut detectors = BitVec::zeros(self.num_detectors);
        let mut logical_flips = BitVec::zeros(self.num_logicals);
        for i in fired {
            let m = &self.mechanisms[i];
            m.detectors.iter().for_each(|&d| detectors.flip(d));
            m.logicals.iter().for_each(|&l| logical_flips.flip(l));
        }
        Shot {
            detectors,
            logical_flips,
        }
    }

    /// Scatters detector bits into `num_layers` rows of `layer_width`
    /// slots; padded slots read 0.
    pub fn layered(&self, detectors: &BitVec) -> Vec<Vec<u8>> {
        let mut out = vec![vec![0u8; self.layer_width]; self.num_layers];
        for (i, c) in self.coords.iter().enumerate() {
            out[c.layer][c.slot] = detectors.get(i) as u8;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "detectors {}", self.num_detectors).unwrap();
        writeln!(out, "logicals {}", self.num_logicals).unwrap();
        writeln!(out, "layout {} {}", self.num_layers, self.layer_width).unwrap();
        for (i, c) in self.coords.iter().enumerate() {
            let b = match c.basis {
                CheckBasis::X => 'X',
                CheckBasis::Z => 'Z',
            };
            writeln!(out, "layer D{i} {} S{} {b}", c.layer, c.slot).unwrap();
        }
        for m in &self.mechanisms {
            write!(out, "error({})", m.probability).unwrap();
            for d in &m.detectors {
                write!(out, " D{d}").unwrap();
            }
            for l in &m.logicals {
                write!(out, " L{l}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CoreError> {
        let err = |ln: usize, msg: String| CoreError::Parse(format!("DEM line {}: {msg}", ln + 1));
        let idx = |ln: usize, s: &str, prefix: &str| -> Result<usize, CoreError> {
            s.strip_prefix(prefix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(ln, format!("expected {prefix}<n>, got `{s}`")))
        };
        let mut dem = DetectorErrorModel {
            num_detectors: 0,
            num_logicals: 0,
            num_layers: 0,
            layer_width: 0,
            coords: Vec::new(),
            mechanisms: Vec::new(),
        };
        for (ln, line) in text.lines().enumerate() {
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                [] => {}
                ["detectors", n] => dem.num_detectors = idx(ln, n, "")?,
                ["logicals", n] => dem.num_logicals = idx(ln, n, "")?,
                ["layout", layers, width] => {
                    dem.num_layers = idx(ln, layers, "")?;
                    dem.layer_width = idx(ln, width, "")?;
                }
                ["layer", d, layer, slot, basis] => {
                    if idx(ln, d, "D")? != dem.coords.len() {
                        return Err(err(ln, "layer lines must be in detector order".into()));
                    }
                    let basis = match *basis {
                        "X" => CheckBasis::X,
                        "Z" => CheckBasis::Z,
                        other => return Err(err(ln, format!("unknown basis `{other}`"))),
                    };
                    dem.coords.push(DetectorCoord {
                        layer: idx(ln, layer, "")?,
                        slot: idx(ln, slot, "S")?,
                        basis,
                    });
                }
                [head, rest @ ..] if head.starts_with("error(") => {
                    let probability: f64 = head
                        .strip_prefix("error(")
                        .and_then(|s| s.strip_suffix(')'))
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(ln, format!("bad probability `{head}`")))?;
                    let mut m = Mechanism {
                        probability,
                        detectors: Vec::new(),
                        logicals: Vec::new(),
                    };
                    for t in rest {
                        if t.starts_with('D') {
                            m.detectors.push(idx(ln, t, "D")?);
                        } else {
                            m.logicals.push(idx(ln, t, "L")?);
                        }
                    }
                    dem.mechanisms.push(m);
                }
                _ => return Err(err(ln, format!("unrecognized line `{line}`"))),
            }
        }
        if dem.coords.len() != dem.num_detectors {
            return Err(CoreError::Parse(format!(
                "{} layer lines for {} detectors",
                dem.coords.len(),
                dem.num_detectors
            )));
        }
        Ok(dem)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedMechanism {
    pub mechanism: Mechanism,
    /// Circuit round of the underlying fault sites.
    pub round: usize,
}

/// Mechanisms merged by signature and round, so that the logical flips
/// accumulated up to a given round can be recovered from a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedDem {
    pub dem: DetectorErrorModel,
    pub rounds: usize,
    pub mechanisms: Vec<TimedMechanism>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub detectors: BitVec,
    pub logical_flips: BitVec,
}

impl Shot {
    pub fn to_line(&self) -> String {
        format!("{} | {}", self.detectors, self.logical_flips)
    }

    pub fn parse_line(line: &str) -> Result<Self, CoreError> {
        let (d, l) = line
            .split_once(" | ")
            .ok_or_else(|| CoreError::Parse(format!("shot line without separator: `{line}`")))?;
        let bits = |s: &str| BitVec::parse(s).ok_or_else(|| CoreError::Parse(format!("bad bits `{s}`")));
        Ok(Shot {
            detectors: bits(d)?,
            logical_flips: bits(l)?,
        })
    }
}

pub fn shots_to_text(shots: &[Shot]) -> String {
    shots.iter().map(|s| s.to_line() + "\n").collect()
}

pub fn parse_shots(text: &str) -> Result<Vec<Shot>, CoreError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(Shot::parse_line).collect()
}

/// A sampled shot together with the logical flips caused by faults up to
/// each round: `intermediate[j]` covers rounds `<= j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedShot {
    pub shot: Shot,
    pub intermediate: Vec<BitVec>,
}

fn detector_coords(circuit: &MemoryCircuit) -> Vec<DetectorCoord> {
    circuit
        .detectors
        .iter()
        .map(|d| DetectorCoord {
            layer: d.layer,
            slot: d.slot,
            basis: d.basis,
        })
        .collect()
}

fn empty_dem(circuit: &MemoryCircuit) -> DetectorErrorModel {
    DetectorErrorModel {
        num_detectors: circuit.detectors.len(),
        num_logicals: circuit.logical_measurements.len(),
        num_layers: circuit.num_layers(),
        layer_width: circuit.layer_width(),
        coords: detector_coords(circuit),
        mechanisms: Vec::new(),
    }
}

/// 64-lane Pauli frame simulator over a memory circuit.
struct FrameSim<'a> {
    circuit: &'a MemoryCircuit,
    x: Vec<u64>,
    z: Vec<u64>,
    meas: Vec<u64>,
}

struct Injection {
    instruction: usize,
    lanes: u64,
    fault: Fault,
}

impl<'a> FrameSim<'a> {
    fn new(circuit: &'a MemoryCircuit) -> Self {
        Self {
            circuit,
            x: vec![0; circuit.num_qubits()],
            z: vec![0; circuit.num_qubits()],
            meas: vec![0; circuit.num_measurements],
        }
    }

    fn inject(&mut self, lanes: u64, fault: &Fault) {
        match *fault {
            Fault::Pauli1 { qubit, pauli } => {
                if pauli.has_x() {
                    self.x[qubit] ^= lanes;
                }
                if pauli.has_z() {
                    self.z[qubit] ^= lanes;
                }
            }
            Fault::Pauli2 { qubits, paulis } => {
                for (q, p) in qubits.into_iter().zip(paulis) {
                    let Some(p) = p else { continue };
                    if p.has_x() {
                        self.x[q] ^= lanes;
                    }
                    if p.has_z() {
                        self.z[q] ^= lanes;
                    }
                }
            }
            Fault::MeasurementFlip { measurement } => self.meas[measurement] ^= lanes,
        }
    }

    /// Runs instructions from `start`, applying each injection right after
    /// its instruction. With `gauge`, frame components that act trivially
    /// on freshly prepared or measured qubits are randomized.
    fn run(&mut self, start: usize, injections: &[Injection], mut gauge: Option<&mut ChaCha8Rng>) {
        let mut next = 0;
        for (i, ins) in self.circuit.instructions.iter().enumerate().skip(start) {
            let q = ins.targets[0];
            let mut noise = || gauge.as_mut().map_or(0, |r| r.next_u64());
            match ins.kind {
                InstructionKind::InitZ => {
                    self.x[q] = 0;
                    self.z[q] = noise();
                }
                InstructionKind::InitX => {
                    self.z[q] = 0;
                    self.x[q] = noise();
                }
                InstructionKind::Cnot => {
                    let t = ins.targets[1];
                    self.x[t] ^= self.x[q];
                    self.z[q] ^= self.z[t];
                }
                InstructionKind::MeasureZ => {
                    self.meas[ins.result.unwrap()] = self.x[q];
                    self.z[q] ^= noise();
                }
                InstructionKind::MeasureX => {
                    self.meas[ins.result.unwrap()] = self.z[q];
                    self.x[q] ^= noise();
                }
                InstructionKind::Idle => {}
            }
            while next < injections.len() && injections[next].instruction == i {
                let inj = &injections[next];
                self.inject(inj.lanes, &inj.fault);
                next += 1;
            }
        }
        debug_assert_eq!(next, injections.len(), "injections must be sorted and in range");
    }

    fn parity_words(&self, sets: impl Iterator<Item = &'a Vec<usize>>) -> Vec<u64> {
        sets.map(|ms| ms.iter().fold(0u64, |acc, &m| acc ^ self.meas[m])).collect()
    }

    fn detector_words(&self) -> Vec<u64> {
        self.parity_words(self.circuit.detectors.iter().map(|d| &d.measurements))
    }

    fn logical_words(&self) -> Vec<u64> {
        self.parity_words(self.circuit.logical_measurements.iter())
    }
}

fn lane_sets(words: &[u64], lanes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); lanes];
    for (i, &w) in words.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            let lane = w.trailing_zeros() as usize;
            if lane < lanes {
                out[lane].push(i);
            }
            w &= w - 1;
        }
    }
    out
}

fn lane_shots(sim: &FrameSim<'_>, lanes: usize) -> Vec<Shot> {
    let dets = sim.detector_words();
    let logs = sim.logical_words();
    (0..lanes)
        .map(|lane| Shot {
            detectors: BitVec::from_ones(dets.len(), (0..dets.len()).filter(|&i| dets[i] >> lane & 1 == 1)),
            logical_flips: BitVec::from_ones(logs.len(), (0..logs.len()).filter(|&i| logs[i] >> lane & 1 == 1)),
        })
        .collect()
}

/// `(detectors, logicals)` flipped by each fault site on its own, computed
/// 64 sites at a time with the frame simulator.
pub fn site_signatures(nc: &NoisyCircuit) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::with_capacity(nc.fault_sites.len());
    for batch in nc.fault_sites.chunks(64) {
        let mut sim = FrameSim::new(&nc.circuit);
        let injections: Vec<Injection> = batch
            .iter()
            .enumerate()
            .map(|(lane, s)| Injection {
                instruction: s.instruction,
                lanes: 1 << lane,
                fault: s.fault,
            })
            .collect();
        sim.run(batch[0].instruction, &injections, None);
        let dets = lane_sets(&sim.detector_words(), batch.len());
        let logs = lane_sets(&sim.logical_words(), batch.len());
        out.extend(dets.into_iter().zip(logs));
    }
    out
}

/// Single-fault propagation by direct Pauli conjugation, one qubit at a
/// time. Independent of the frame simulator used by [`build_dem`].
pub struct FaultPropagator<'a> {
    nc: &'a NoisyCircuit,
    detectors_of_measurement: Vec<Vec<usize>>,
    logicals_of_measurement: Vec<Vec<usize>>,
}

impl<'a> FaultPropagator<'a> {
    pub fn new(nc: &'a NoisyCircuit) -> Self {
        let n = nc.circuit.num_measurements;
        let mut detectors_of_measurement = vec![Vec::new(); n];
        for (i, d) in nc.circuit.detectors.iter().enumerate() {
            for &m in &d.measurements {
                detectors_of_measurement[m].push(i);
            }
        }
        let mut logicals_of_measurement = vec![Vec::new(); n];
        for (i, l) in nc.circuit.logical_measurements.iter().enumerate() {
            for &m in l {
                logicals_of_measurement[m].push(i);
            }
        }
        Self {
            nc,
            detectors_of_measurement,
            logicals_of_measurement,
        }
    }

    pub fn propagate(&self, site: usize) -> Result<(Vec<usize>, Vec<usize>), CoreError> {
        let sites = &self.nc.fault_sites;
        let s = sites.get(site).ok_or(CoreError::FaultSiteOutOfRange {
            index: site,
            count: sites.len(),
        })?;
        let circuit = &self.nc.circuit;
        let mut has_x = vec![false; circuit.num_qubits()];
        let mut has_z = vec![false; circuit.num_qubits()];
        let mut flipped = Vec::new();
        let mut set = |q: usize, x: bool, z: bool| {
            has_x[q] ^= x;
            has_z[q] ^= z;
        };
        match s.fault {
            Fault::Pauli1 { qubit, pauli } => set(qubit, pauli.has_x(), pauli.has_z()),
            Fault::Pauli2 { qubits, paulis } => {
                for (q, p) in qubits.into_iter().zip(paulis) {
                    if let Some(p) = p {
                        set(q, p.has_x(), p.has_z());
                    }
                }
            }
            Fault::MeasurementFlip { measurement } => flipped.push(measurement),
        }
        for ins in &circuit.instructions[s.instruction + 1..] {
            let q = ins.targets[0];
            match ins.kind {
                InstructionKind::InitZ | InstructionKind::InitX => {
                    has_x[q] = false;
                    has_z[q] = false;
                }
                InstructionKind::Cnot => {
                    let t = ins.targets[1];
                    if has_x[q] {
                        has_x[t] = !has_x[t];
                    }
                    if has_z[t] {
                        has_z[q] = !has_z[q];
                    }
                }
                InstructionKind::MeasureZ if has_x[q] => flipped.push(ins.result.unwrap()),
                InstructionKind::MeasureX if has_z[q] => flipped.push(ins.result.unwrap()),
                _ => {}
            }
        }
        let mut dets = vec![false; circuit.detectors.len()];
        let mut logs = vec![false; circuit.logical_measurements.len()];
        for m in flipped {
            self.detectors_of_measurement[m].iter().for_each(|&d| dets[d] = !dets[d]);
            self.logicals_of_measurement[m].iter().for_each(|&l| logs[l] = !logs[l]);
        }
        let ones = |v: Vec<bool>| v.into_iter().enumerate().filter(|x| x.1).map(|x| x.0).collect();
        Ok((ones(dets), ones(logs)))
    }
}

/// Detectors and logicals flipped when only fault site `site` fires.
pub fn propagate_single_fault(nc: &NoisyCircuit, site: usize) -> Result<(Vec<usize>, Vec<usize>), CoreError> {
    FaultPropagator::new(nc).propagate(site)
}

pub fn build_dem(nc: &NoisyCircuit) -> DetectorErrorModel {
    let sigs = site_signatures(nc);
    let mut dem = empty_dem(&nc.circuit);
    dem.mechanisms = merge_mechanisms(nc.fault_sites.iter().zip(sigs).map(|(s, (d, l))| Mechanism {
        probability: s.probability,
        detectors: d,
        logicals: l,
    }));
    dem
}

pub fn build_timed_dem(nc: &NoisyCircuit) -> TimedDem {
    let sigs = site_signatures(nc);
    let mut index: HashMap<(Vec<usize>, Vec<usize>, usize), usize> = HashMap::new();
    let mut mechanisms: Vec<TimedMechanism> = Vec::new();
    for (s, (d, l)) in nc.fault_sites.iter().zip(sigs) {
        if d.is_empty() && l.is_empty() {
            continue;
        }
        let key = (d, l, s.round);
        match index.get(&key) {
            Some(&i) => {
                let m = &mut mechanisms[i].mechanism;
                m.probability = merge_probability(m.probability, s.probability);
            }
            None => {
                index.insert(key.clone(), mechanisms.len());
                mechanisms.push(TimedMechanism {
                    mechanism: Mechanism {
                        probability: s.probability,
                        detectors: key.0,
                        logicals: key.1,
                    },
                    round: key.2,
                });
            }
        }
    }
    mechanisms.retain(|m| m.mechanism.probability > 0.0);
    let mut dem = empty_dem(&nc.circuit);
    dem.mechanisms = merge_mechanisms(mechanisms.iter().map(|m| m.mechanism.clone()));
    TimedDem {
        dem,
        rounds: nc.circuit.rounds,
        mechanisms,
    }
}

/// Removes detectors rejected by `keep`, renumbers the rest in order and
/// re-merges mechanisms whose signatures coincide afterwards.
pub fn restrict_dem(
    dem: &DetectorErrorModel,
    keep: impl Fn(usize, &DetectorCoord) -> bool,
) -> DetectorErrorModel {
    let mut remap = vec![None; dem.num_detectors];
    let mut coords = Vec::new();
    for (i, c) in dem.coords.iter().enumerate() {
        if keep(i, c) {
            remap[i] = Some(coords.len());
            coords.push(*c);
        }
    }
    let mechanisms = merge_mechanisms(dem.mechanisms.iter().map(|m| Mechanism {
        probability: m.probability,
        detectors: m.detectors.iter().filter_map(|&d| remap[d]).collect(),
        logicals: m.logicals.clone(),
    }));
    DetectorErrorModel {
        num_detectors: coords.len(),
        num_logicals: dem.num_logicals,
        num_layers: dem.num_layers,
        layer_width: dem.layer_width,
        coords,
        mechanisms,
    }
}

/// Keeps only X-check detectors.
pub fn x_only(dem: &DetectorErrorModel) -> DetectorErrorModel {
    restrict_dem(dem, |_, c| c.basis == CheckBasis::X)
}

fn thresholds(probs: &[f64]) -> Vec<u64> {
    probs
        .iter()
        .map(|&p| {
            if p >= 1.0 {
                u64::MAX
            } else {
                (p.max(0.0) * 18_446_744_073_709_551_616.0) as u64
            }
        })
        .collect()
}

/// Independent Bernoulli draws: for each of `n` shots, the indices of
/// fired events. Shot ranges of [`SHARD_SIZE`] use ChaCha8 streams keyed by
/// `(seed, shard)`, so results do not depend on the thread count.
pub fn sample_fired(probs: &[f64], n: usize, seed: u64) -> Vec<Vec<usize>> {
    let thr = thresholds(probs);
    let always: Vec<bool> = probs.iter().map(|&p| p >= 1.0).collect();
    let shards = n.div_ceil(SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .flat_map_iter(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let count = SHARD_SIZE.min(n - shard * SHARD_SIZE);
            let thr = &thr;
            let always = &always;
            (0..count)
                .map(move |_| {
                    (0..thr.len())
                        .filter(|&i| rng.next_u64() < thr[i] || always[i])
                        .collect()
                })
                .collect::<Vec<Vec<usize>>>()
        })
        .collect()
}

pub fn sample_shots(dem: &DetectorErrorModel, n: usize, seed: u64) -> Vec<Shot> {
    sample_fired(&dem.priors(), n, seed)
        .into_iter()
        .map(|fired| dem.outcome(fired))
        .collect()
}

/// Logical flips from the fired mechanisms whose round is `<= round`.
pub fn intermediate_flips(
    mechanisms: &[TimedMechanism],
    fired: &[usize],
    num_logicals: usize,
    round: usize,
) -> BitVec {
    let mut out = BitVec::zeros(num_logicals);
    for &i in fired {
        if mechanisms[i].round <= round {
            mechanisms[i].mechanism.logicals.iter().for_each(|&l| out.flip(l));
        }
    }
    out
}

pub fn sample_timed_shots(timed: &TimedDem, n: usize, seed: u64) -> Vec<TimedShot> {
    let probs: Vec<f64> = timed.mechanisms.iter().map(|m| m.mechanism.probability).collect();
    let dem = &timed.dem;
    sample_fired(&probs, n, seed)
        .into_iter()
        .map(|fired| {
            let mut detectors = BitVec::zeros(dem.num_detectors);
            for &i in &fired {
                timed.mechanisms[i].mechanism.detectors.iter().for_each(|&d| detectors.flip(d));
            }
            let intermediate: Vec<BitVec> = (0..=timed.rounds)
                .map(|j| intermediate_flips(&timed.mechanisms, &fired, dem.num_logicals, j))
                .collect();
            let logical_flips = intermediate[timed.rounds].clone();
            TimedShot {
                shot: Shot {
                    detectors,
                    logical_flips,
                },
                intermediate,
            }
        })
        .collect()
}

/// Runs the full circuit with the given fault sites fired in each shot
/// (one entry per shot), optionally with gauge randomization.
pub fn simulate_with_faults(nc: &NoisyCircuit, fired_sites: &[Vec<usize>], gauge_seed: Option<u64>) -> Vec<Shot> {
    let mut out = Vec::with_capacity(fired_sites.len());
    for (batch_index, batch) in fired_sites.chunks(64).enumerate() {
        let mut injections: Vec<Injection> = Vec::new();
        for (lane, sites) in batch.iter().enumerate() {
            for &s in sites {
                let site = &nc.fault_sites[s];
                injections.push(Injection {
                    instruction: site.instruction,
                    lanes: 1 << lane,
                    fault: site.fault,
                });
            }
        }
        injections.sort_by_key(|i| i.instruction);
        let mut rng = gauge_seed.map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            r.set_stream(batch_index as u64);
            r
        });
        let mut sim = FrameSim::new(&nc.circuit);
        sim.run(0, &injections, rng.as_mut());
        out.extend(lane_shots(&sim, batch.len()));
    }
    out
}

/// Full-circuit Monte-Carlo sampling: every fault site fires independently
/// and frames are gauge-randomized.
pub fn sample_circuit(nc: &NoisyCircuit, n: usize, seed: u64) -> Vec<Shot> {
    let probs: Vec<f64> = nc.fault_sites.iter().map(|s| s.probability).collect();
    let fired = sample_fired(&probs, n, seed);
    let mut gauge = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_faults(nc, &fired, Some(gauge.random()))
}
