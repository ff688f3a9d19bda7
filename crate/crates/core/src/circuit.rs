//! Memory-experiment circuits and circuit-level noise annotation.
//!
//! Layout of a circuit for a code with `mx` X checks and `mz` Z checks:
//! data qubits `0..n`, X ancillas `n..n+mx`, Z ancillas `n+mx..n+mx+mz`.
//!
//! Rounds `0` and `N_R + 1` are noiseless; rounds `1..=N_R` are noisy. Each
//! round is: ancilla init, the CNOT layers of the schedule, ancilla
//! measurement. Every qubit that no
//! instruction touches in a round's time step gets an explicit `idle`.
//!
//! Detector layers (each `mx + mz` slots wide, X checks first):
//! - layer 0: round-0 X-check outcomes;
//! - layer `t` for `1..=N_R+1`: round `t-1` XOR round `t`, X and Z checks;
//! - layer `N_R+2`: round `N_R+1` X checks XOR the data-readout parity.
//!
//! Slots with no detector in a layer are padding.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::code::{CssCode, Monomial};
use crate::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionKind {
    InitZ,
    InitX,
    Cnot,
    MeasureZ,
    MeasureX,
    Idle,
}

impl InstructionKind {
    pub fn name(self) -> &'static str {
        match self {
            InstructionKind::InitZ => "init_z",
            InstructionKind::InitX => "init_x",
            InstructionKind::Cnot => "cnot",
            InstructionKind::MeasureZ => "measure_z",
            InstructionKind::MeasureX => "measure_x",
            InstructionKind::Idle => "idle",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "init_z" => InstructionKind::InitZ,
            "init_x" => InstructionKind::InitX,
            "cnot" => InstructionKind::Cnot,
            "measure_z" => InstructionKind::MeasureZ,
            "measure_x" => InstructionKind::MeasureX,
            "idle" => InstructionKind::Idle,
            _ => return None,
        })
    }

    pub fn is_measurement(self) -> bool {
        matches!(self, InstructionKind::MeasureZ | InstructionKind::MeasureX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstructionKind,
    /// `[control, target]` for CNOT, a single qubit otherwise.
    pub targets: Vec<usize>,
    pub time_step: usize,
    /// Index into the measurement record, for measurements.
    pub result: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckBasis {
    X,
    Z,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detector {
    pub layer: usize,
    pub slot: usize,
    pub basis: CheckBasis,
    /// Measurement indices whose XOR is deterministic without noise.
    pub measurements: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundSpan {
    pub noisy: bool,
    pub first_step: usize,
    pub last_step: usize,
}

/// Per-check CNOT time steps, numbered from 0 within a round's CNOT phase.
///
/// `x_checks[c]` lists `(data qubit, step)` for X check `c` in execution
/// order; likewise `z_checks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnotSchedule {
    pub x_checks: Vec<Vec<(usize, usize)>>,
    pub z_checks: Vec<Vec<(usize, usize)>>,
}

impl CnotSchedule {
    /// Packs per-check data-qubit orders into the earliest conflict-free
    /// layers, checks in index order, all X checks before any Z check.
    pub fn from_orders(x_orders: &[Vec<usize>], z_orders: &[Vec<usize>]) -> Self {
        fn pack(orders: &[Vec<usize>], offset: usize) -> (Vec<Vec<(usize, usize)>>, usize) {
            let mut busy: HashMap<usize, Vec<bool>> = HashMap::new();
            let mut depth = offset;
            let packed = orders
                .iter()
                .map(|order| {
                    let mut next = offset;
                    order
                        .iter()
                        .map(|&q| {
                            let used = busy.entry(q).or_default();
                            let mut step = next;
                            while used.get(step).copied().unwrap_or(false) {
                                step += 1;
                            }
                            if used.len() <= step {
                                used.resize(step + 1, false);
                            }
                            used[step] = true;
                            next = step + 1;
                            depth = depth.max(next);
                            (q, step)
                        })
                        .collect()
                })
                .collect();
            (packed, depth)
        }
        let (x_checks, x_depth) = pack(x_orders, 0);
        let (z_checks, _) = pack(z_orders, x_depth);
        Self { x_checks, z_checks }
    }

    /// Each check's support in ascending order, packed greedily.
    pub fn default_for(code: &CssCode) -> Self {
        let x: Vec<Vec<usize>> = (0..code.hx.rows()).map(|r| code.hx.row_support(r)).collect();
        let z: Vec<Vec<usize>> = (0..code.hz.rows()).map(|r| code.hz.row_support(r)).collect();
        Self::from_orders(&x, &z)
    }

    /// Interleaved depth-7 schedule for a bivariate bicycle code with
    /// three-term polynomials. Each CNOT layer applies one monomial to every
    /// X check and one to every Z check, on opposite halves of the data.
    pub fn bivariate_bicycle(l: usize, m: usize, a_terms: &[Monomial], b_terms: &[Monomial]) -> Result<Self, CoreError> {
        if a_terms.len() != 3 || b_terms.len() != 3 {
            return Err(CoreError::Schedule("interleaved schedule needs three-term polynomials".into()));
        }
        let half = l * m;
        let shift = |check: usize, t: Monomial, sign: i64| {
            let (i, j) = ((check / m) as i64, (check % m) as i64);
            let ii = (i + sign * t.x_exp as i64).rem_euclid(l as i64) as usize;
            let jj = (j + sign * t.y_exp as i64).rem_euclid(m as i64) as usize;
            ii * m + jj
        };
        // (step, polynomial, term): X checks reach the left half through A
        // and the right half through B; Z checks reach the left half through
        // B^T and the right half through A^T.
        let x_plan = [(1, 'A', 1), (2, 'B', 1), (3, 'B', 0), (4, 'B', 2), (5, 'A', 0), (6, 'A', 2)];
        let z_plan = [(0, 'A', 0), (1, 'A', 2), (2, 'B', 0), (3, 'B', 1), (4, 'B', 2), (5, 'A', 1)];
        let x_checks = (0..half)
            .map(|c| {
                x_plan
                    .iter()
                    .map(|&(step, poly, k)| match poly {
                        'A' => (shift(c, a_terms[k], 1), step),
                        _ => (half + shift(c, b_terms[k], 1), step),
                    })
                    .collect()
            })
            .collect();
        let z_checks = (0..half)
            .map(|c| {
                z_plan
                    .iter()
                    .map(|&(step, poly, k)| match poly {
                        'A' => (half + shift(c, a_terms[k], -1), step),
                        _ => (shift(c, b_terms[k], -1), step),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { x_checks, z_checks })
    }

    pub fn depth(&self) -> usize {
        self.x_checks
            .iter()
            .chain(&self.z_checks)
            .flat_map(|c| c.iter().map(|&(_, s)| s + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, code: &CssCode) -> Result<(), CoreError> {
        if self.x_checks.len() != code.hx.rows() || self.z_checks.len() != code.hz.rows() {
            return Err(CoreError::Schedule("schedule check count does not match the code".into()));
        }
        let coverage = |checks: &[Vec<(usize, usize)>], h: &crate::gf2::BitMatrix, label: &str| {
            for (c, entries) in checks.iter().enumerate() {
                let mut qubits: Vec<usize> = entries.iter().map(|&(q, _)| q).collect();
                qubits.sort_unstable();
                if qubits != h.row_support(c) {
                    return Err(CoreError::Schedule(format!(
                        "{label} check {c} does not cover its support exactly once"
                    )));
                }
                if entries.windows(2).any(|w| w[0].1 >= w[1].1) {
                    return Err(CoreError::Schedule(format!(
                        "{label} check {c} has non-increasing time steps"
                    )));
                }
            }
            Ok(())
        };
        coverage(&self.x_checks, &code.hx, "X")?;
        coverage(&self.z_checks, &code.hz, "Z")?;

        // Ancillas are distinct per check and their steps strictly increase,
        // so only data qubits can collide.
        let mut used: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, entries) in self.x_checks.iter().chain(&self.z_checks).enumerate() {
            for &(q, step) in entries {
                if let Some(other) = used.insert((q, step), c) {
                    return Err(CoreError::Schedule(format!(
                        "time step {step}: data qubit {q} used by checks {other} and {c}"
                    )));
                }
            }
        }

        // An X check and a Z check measure correctly only if the shared
        // qubits where the X CNOT comes first are even in number.
        for (a, xs) in self.x_checks.iter().enumerate() {
            let x_steps: HashMap<usize, usize> = xs.iter().copied().collect();
            for (b, zs) in self.z_checks.iter().enumerate() {
                let earlier = zs
                    .iter()
                    .filter(|(q, s)| x_steps.get(q).is_some_and(|xs| xs < s))
                    .count();
                if earlier % 2 == 1 {
                    return Err(CoreError::Schedule(format!(
                        "X check {a} and Z check {b} are interleaved with odd order parity"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A noiseless memory-experiment circuit with its detectors and logical
/// measurements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryCircuit {
    pub instructions: Vec<Instruction>,
    pub n_data: usize,
    pub n_ancilla: usize,
    pub num_x_checks: usize,
    pub num_z_checks: usize,
    /// Number of noisy rounds `N_R`.
    pub rounds: usize,
    pub round_spans: Vec<RoundSpan>,
    pub num_measurements: usize,
    pub detectors: Vec<Detector>,
    pub logical_measurements: Vec<Vec<usize>>,
}

impl MemoryCircuit {
    pub fn num_qubits(&self) -> usize {
        self.n_data + self.n_ancilla
    }

    /// Detector slots per layer.
    pub fn layer_width(&self) -> usize {
        self.num_x_checks + self.num_z_checks
    }

    pub fn num_layers(&self) -> usize {
        self.rounds + 3
    }

    /// Round containing `step`, or `None` for data preparation and readout.
    pub fn round_of_step(&self, step: usize) -> Option<usize> {
        self.round_spans
            .iter()
            .position(|s| s.first_step <= step && step <= s.last_step)
    }

    pub fn is_noisy_step(&self, step: usize) -> bool {
        self.round_of_step(step).is_some_and(|r| self.round_spans[r].noisy)
    }

    pub fn num_time_steps(&self) -> usize {
        self.instructions.last().map_or(0, |i| i.time_step + 1)
    }

    /// Line-oriented text form; [`MemoryCircuit::parse`] inverts it exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "qubits {} {}", self.n_data, self.n_ancilla).unwrap();
        writeln!(out, "checks {} {}", self.num_x_checks, self.num_z_checks).unwrap();
        writeln!(out, "noisy_rounds {}", self.rounds).unwrap();
        for (r, s) in self.round_spans.iter().enumerate() {
            let tag = if s.noisy { "noisy" } else { "noiseless" };
            writeln!(out, "round {r} {tag} @t{} @t{}", s.first_step, s.last_step).unwrap();
        }
        for ins in &self.instructions {
            out.push_str(ins.kind.name());
            for t in &ins.targets {
                write!(out, " {t}").unwrap();
            }
            writeln!(out, " @t{}", ins.time_step).unwrap();
        }
        for d in &self.detectors {
            write!(out, "detector L{} S{}", d.layer, d.slot).unwrap();
            for m in &d.measurements {
                write!(out, " M{m}").unwrap();
            }
            out.push('\n');
        }
        for (i, l) in self.logical_measurements.iter().enumerate() {
            write!(out, "logical {i}").unwrap();
            for m in l {
                write!(out, " M{m}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CoreError> {
        let err = |line: usize, msg: &str| CoreError::Parse(format!("circuit line {}: {msg}", line + 1));
        let num = |line: usize, s: &str, prefix: &str| -> Result<usize, CoreError> {
            s.strip_prefix(prefix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(line, &format!("expected {prefix}<n>, got `{s}`")))
        };
        let mut c = MemoryCircuit {
            instructions: Vec::new(),
            n_data: 0,
            n_ancilla: 0,
            num_x_checks: 0,
            num_z_checks: 0,
            rounds: 0,
            round_spans: Vec::new(),
            num_measurements: 0,
            detectors: Vec::new(),
            logical_measurements: Vec::new(),
        };
        for (ln, line) in text.lines().enumerate() {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let Some(&head) = tok.first() else { continue };
            match head {
                "qubits" | "checks" if tok.len() == 3 => {
                    let a = num(ln, tok[1], "")?;
                    let b = num(ln, tok[2], "")?;
                    if head == "qubits" {
                        (c.n_data, c.n_ancilla) = (a, b);
                    } else {
                        (c.num_x_checks, c.num_z_checks) = (a, b);
                    }
                }
                "noisy_rounds" if tok.len() == 2 => c.rounds = num(ln, tok[1], "")?,
                "round" if tok.len() == 5 => {
                    let noisy = match tok[2] {
                        "noisy" => true,
                        "noiseless" => false,
                        _ => return Err(err(ln, "round tag must be noisy or noiseless")),
                    };
                    c.round_spans.push(RoundSpan {
                        noisy,
                        first_step: num(ln, tok[3], "@t")?,
                        last_step: num(ln, tok[4], "@t")?,
                    });
                }
                "detector" => {
                    if tok.len() < 3 {
                        return Err(err(ln, "detector needs layer and slot"));
                    }
                    let layer = num(ln, tok[1], "L")?;
                    let slot = num(ln, tok[2], "S")?;
                    let measurements = tok[3..]
                        .iter()
                        .map(|t| num(ln, t, "M"))
                        .collect::<Result<_, _>>()?;
                    let basis = if slot < c.num_x_checks { CheckBasis::X } else { CheckBasis::Z };
                    c.detectors.push(Detector {
                        layer,
                        slot,
                        basis,
                        measurements,
                    });
                }
                "logical" => {
                    if tok.len() < 2 || num(ln, tok[1], "")? != c.logical_measurements.len() {
                        return Err(err(ln, "logical lines must be numbered consecutively"));
                    }
                    c.logical_measurements.push(
                        tok[2..].iter().map(|t| num(ln, t, "M")).collect::<Result<_, _>>()?,
                    );
                }
                _ => {
                    let kind = InstructionKind::parse(head)
                        .ok_or_else(|| err(ln, &format!("unknown instruction `{head}`")))?;
                    let last = tok.len() - 1;
                    let time_step = num(ln, tok[last], "@t")?;
                    let targets: Vec<usize> =
                        tok[1..last].iter().map(|t| num(ln, t, "")).collect::<Result<_, _>>()?;
                    let arity = if kind == InstructionKind::Cnot { 2 } else { 1 };
                    if targets.len() != arity {
                        return Err(err(ln, "wrong number of targets"));
                    }
                    if kind == InstructionKind::Cnot && targets[0] == targets[1] {
                        return Err(err(ln, "cnot targets must be distinct"));
                    }
                    let result = kind.is_measurement().then(|| {
                        c.num_measurements += 1;
                        c.num_measurements - 1
                    });
                    c.instructions.push(Instruction {
                        kind,
                        targets,
                        time_step,
                        result,
                    });
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Display for MemoryCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

struct CircuitBuilder {
    instructions: Vec<Instruction>,
    num_measurements: usize,
    num_qubits: usize,
}

impl CircuitBuilder {
    fn push(&mut self, kind: InstructionKind, targets: Vec<usize>, time_step: usize) -> Option<usize> {
        let result = kind.is_measurement().then(|| {
            self.num_measurements += 1;
            self.num_measurements - 1
        });
        self.instructions.push(Instruction {
            kind,
            targets,
            time_step,
            result,
        });
        result
    }

    /// Emits one time step: the given instructions plus idles on every
    /// untouched qubit.
    fn step(&mut self, time_step: usize, ops: Vec<(InstructionKind, Vec<usize>)>) -> Vec<Option<usize>> {
        let mut touched = vec![false; self.num_qubits];
        let mut results = Vec::with_capacity(ops.len());
        for (kind, targets) in ops {
            for &t in &targets {
                assert!(!touched[t], "qubit {t} used twice at step {time_step}");
                touched[t] = true;
            }
            results.push(self.push(kind, targets, time_step));
        }
        for q in 0..self.num_qubits {
            if !touched[q] {
                self.push(InstructionKind::Idle, vec![q], time_step);
            }
        }
        results
    }
}

/// Builds the memory experiment: noiseless `|+>^n` preparation, one
/// noiseless round, `n_rounds_noisy` noisy rounds, one noiseless round, and
/// noiseless X-basis readout of every data qubit.
pub fn build_memory_circuit(
    code: &CssCode,
    n_rounds_noisy: usize,
    schedule: &CnotSchedule,
) -> Result<MemoryCircuit, CoreError> {
    schedule.validate(code)?;
    let n = code.n;
    let mx = code.num_x_checks();
    let mz = code.num_z_checks();
    let x_anc = |c: usize| n + c;
    let z_anc = |c: usize| n + mx + c;
    let depth = schedule.depth();

    // CNOTs grouped by layer: X checks target data from the ancilla, Z
    // checks target the ancilla from data.
    let mut layers: Vec<Vec<(InstructionKind, Vec<usize>)>> = vec![Vec::new(); depth];
    for (c, entries) in schedule.x_checks.iter().enumerate() {
        for &(q, s) in entries {
            layers[s].push((InstructionKind::Cnot, vec![x_anc(c), q]));
        }
    }
    for (c, entries) in schedule.z_checks.iter().enumerate() {
        for &(q, s) in entries {
            layers[s].push((InstructionKind::Cnot, vec![q, z_anc(c)]));
        }
    }

    let mut b = CircuitBuilder {
        instructions: Vec::new(),
        num_measurements: 0,
        num_qubits: n + mx + mz,
    };
    let mut t = 0;
    b.step(t, (0..n).map(|q| (InstructionKind::InitX, vec![q])).collect());
    t += 1;

    let total_rounds = n_rounds_noisy + 2;
    let mut round_spans = Vec::with_capacity(total_rounds);
    // check_results[r][slot] = measurement index
    let mut check_results: Vec<Vec<usize>> = Vec::with_capacity(total_rounds);
    for r in 0..total_rounds {
        let first_step = t;
        let inits = (0..mx)
            .map(|c| (InstructionKind::InitX, vec![x_anc(c)]))
            .chain((0..mz).map(|c| (InstructionKind::InitZ, vec![z_anc(c)])))
            .collect();
        b.step(t, inits);
        t += 1;
        for layer in &layers {
            b.step(t, layer.clone());
            t += 1;
        }
        let meas = (0..mx)
            .map(|c| (InstructionKind::MeasureX, vec![x_anc(c)]))
            .chain((0..mz).map(|c| (InstructionKind::MeasureZ, vec![z_anc(c)])))
            .collect();
        let results = b.step(t, meas).into_iter().map(|m| m.unwrap()).collect();
        check_results.push(results);
        round_spans.push(RoundSpan {
            noisy: r >= 1 && r <= n_rounds_noisy,
            first_step,
            last_step: t,
        });
        t += 1;
    }
    let data_results: Vec<usize> = b
        .step(t, (0..n).map(|q| (InstructionKind::MeasureX, vec![q])).collect())
        .into_iter()
        .map(|m| m.unwrap())
        .collect();

    let basis = |slot: usize| if slot < mx { CheckBasis::X } else { CheckBasis::Z };
    let mut detectors = Vec::new();
    for c in 0..mx {
        detectors.push(Detector {
            layer: 0,
            slot: c,
            basis: CheckBasis::X,
            measurements: vec![check_results[0][c]],
        });
    }
    for r in 1..total_rounds {
        for slot in 0..mx + mz {
            detectors.push(Detector {
                layer: r,
                slot,
                basis: basis(slot),
                measurements: vec![check_results[r - 1][slot], check_results[r][slot]],
            });
        }
    }
    let final_layer = total_rounds;
    for c in 0..mx {
        let mut measurements = vec![check_results[total_rounds - 1][c]];
        measurements.extend(code.hx.row(c).iter_ones().map(|q| data_results[q]));
        detectors.push(Detector {
            layer: final_layer,
            slot: c,
            basis: CheckBasis::X,
            measurements,
        });
    }
    let logical_measurements = code
        .logical_x
        .iter()
        .map(|l| l.iter_ones().map(|q| data_results[q]).collect())
        .collect();

    Ok(MemoryCircuit {
        instructions: b.instructions,
        n_data: n,
        n_ancilla: mx + mz,
        num_x_checks: mx,
        num_z_checks: mz,
        rounds: n_rounds_noisy,
        round_spans,
        num_measurements: b.num_measurements,
        detectors,
        logical_measurements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Pauli on one qubit, applied after the instruction.
    Pauli1 { qubit: usize, pauli: Pauli },
    /// Pauli pair on the two CNOT qubits; `None` is identity on that qubit.
    Pauli2 {
        qubits: [usize; 2],
        paulis: [Option<Pauli>; 2],
    },
    /// Classical flip of a measurement result.
    MeasurementFlip { measurement: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSite {
    /// Index of the instruction this fault follows (or corrupts).
    pub instruction: usize,
    /// Circuit round the instruction belongs to (1-based noisy rounds).
    pub round: usize,
    pub fault: Fault,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct NoisyCircuit {
    pub circuit: MemoryCircuit,
    pub fault_sites: Vec<FaultSite>,
    pub p: f64,
}

/// Attaches the circuit-level depolarizing model to every instruction in
/// the noisy rounds.
pub fn annotate_noise(circuit: MemoryCircuit, p: f64) -> Result<NoisyCircuit, CoreError> {
    if !(0.0..1.0).contains(&p) || p.is_nan() {
        return Err(CoreError::InvalidProbability(p));
    }
    let mut fault_sites = Vec::new();
    for (i, ins) in circuit.instructions.iter().enumerate() {
        let Some(round) = circuit.round_of_step(ins.time_step) else { continue };
        if !circuit.round_spans[round].noisy {
            continue;
        }
        let mut push = |fault: Fault, probability: f64| {
            fault_sites.push(FaultSite {
                instruction: i,
                round,
                fault,
                probability,
            })
        };
        let q = ins.targets[0];
        match ins.kind {
            InstructionKind::InitZ => push(Fault::Pauli1 { qubit: q, pauli: Pauli::X }, p),
            InstructionKind::InitX => push(Fault::Pauli1 { qubit: q, pauli: Pauli::Z }, p),
            InstructionKind::Idle => {
                for pauli in Pauli::ALL {
                    push(Fault::Pauli1 { qubit: q, pauli }, p / 3.0);
                }
            }
            InstructionKind::Cnot => {
                let options = [None, Some(Pauli::X), Some(Pauli::Y), Some(Pauli::Z)];
                for a in options {
                    for b in options {
                        if a.is_none() && b.is_none() {
                            continue;
                        }
                        push(
                            Fault::Pauli2 {
                                qubits: [ins.targets[0], ins.targets[1]],
                                paulis: [a, b],
                            },
                            p / 15.0,
                        );
                    }
                }
            }
            InstructionKind::MeasureZ | InstructionKind::MeasureX => push(
                Fault::MeasurementFlip {
                    measurement: ins.result.expect("measurement carries a result index"),
                },
                p,
            ),
        }
    }
    Ok(NoisyCircuit {
        circuit,
        fault_sites,
        p,
    })
}
