//! Dense statevector engine.
//!
//! Qubit q lives on bit q of the amplitude index.  Registers are contiguous
//! bit ranges: the system S occupies the low bits, the PREPARE ancillas A sit
//! above it and the single superposition ancilla on top.  All randomness is
//! drawn from keyed substreams of one master seed, so results are bitwise
//! reproducible for any worker schedule.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::hamiltonian::{PauliHamiltonian, PauliString};

/// Squared norms below this are treated as an empty branch.
pub const DEGENERATE_NORM: f64 = 1e-14;

// ---------------------------------------------------------------------------
// deterministic accumulation
// ---------------------------------------------------------------------------

/// Fixed-order pairwise summation; the reduction tree depends only on the
/// slice length, which keeps results identical across worker counts.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 8 {
        let mut acc = Complex64::new(0.0, 0.0);
        for x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
    }
}

// ---------------------------------------------------------------------------
// registers
// ---------------------------------------------------------------------------

/// Named registers of the sampled-pair circuit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Register {
    /// System qubits (N sites).
    System,
    /// PREPARE ancillas indexing the Hamiltonian terms.
    Prepare,
    /// Single superposition ancilla controlling the walk pair.
    Superpose,
}

/// Contiguous qubit ranges for (system, prepare, superpose).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterLayout {
    n_sites: usize,
    prep_qubits: usize,
}

pub fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

impl RegisterLayout {
    /// Layout for an N-site model whose Hamiltonian has `d_prime` terms.
    pub fn for_terms(n_sites: usize, d_prime: usize) -> Self {
        Self {
            n_sites,
            prep_qubits: ceil_log2(d_prime),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn prep_qubits(&self) -> usize {
        self.prep_qubits
    }

    pub fn total_qubits(&self) -> usize {
        self.n_sites + self.prep_qubits + 1
    }

    pub fn range(&self, register: Register) -> Range<usize> {
        match register {
            Register::System => 0..self.n_sites,
            Register::Prepare => self.n_sites..self.n_sites + self.prep_qubits,
            Register::Superpose => {
                self.n_sites + self.prep_qubits..self.n_sites + self.prep_qubits + 1
            }
        }
    }

    /// Both ancilla registers (A plus the superposition qubit) as one range.
    pub fn ancilla_range(&self) -> Range<usize> {
        self.n_sites..self.total_qubits()
    }
}

// ---------------------------------------------------------------------------
// state
// ---------------------------------------------------------------------------

/// Dense amplitude vector over a qubit register, possibly unnormalized.
#[derive(Debug, Clone)]
pub struct QuantumState {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl QuantumState {
    pub fn zero_state(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Self {
        assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr()).collect();
        pairwise_sum(&sq)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sq();
        if n2 < DEGENERATE_NORM {
            return Err(Error::DegenerateState(n2));
        }
        let inv = 1.0 / n2.sqrt();
        let amps = self.amps.iter().map(|a| a * inv).collect();
        Ok(Self {
            n_qubits: self.n_qubits,
            amps,
        })
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        let prods: Vec<Complex64> = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .collect();
        pairwise_sum_complex(&prods)
    }

    /// Embed a system-register state into the full layout with all ancillas
    /// in |0>.
    pub fn embed_system(system: &QuantumState, layout: &RegisterLayout) -> Self {
        assert_eq!(system.n_qubits, layout.n_sites());
        let mut full = Self {
            n_qubits: layout.total_qubits(),
            amps: vec![Complex64::new(0.0, 0.0); 1 << layout.total_qubits()],
        };
        full.amps[..system.amps.len()].copy_from_slice(&system.amps);
        full
    }
}

// ---------------------------------------------------------------------------
// circuits
// ---------------------------------------------------------------------------

/// Control condition: qubit must read `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub qubit: usize,
    pub value: bool,
}

impl Control {
    pub fn active(qubit: usize) -> Self {
        Self { qubit, value: true }
    }

    pub fn inactive(qubit: usize) -> Self {
        Self {
            qubit,
            value: false,
        }
    }
}

/// Single-qubit gate kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    Hadamard,
    PauliX,
    PauliY,
    PauliZ,
    /// diag(1, e^{i phi}).
    Phase(f64),
    RotX(f64),
    RotY(f64),
    RotZ(f64),
}

impl GateKind {
    fn matrix(&self) -> [[Complex64; 2]; 2] {
        let z = |re: f64, im: f64| Complex64::new(re, im);
        match *self {
            GateKind::Hadamard => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                [[z(s, 0.), z(s, 0.)], [z(s, 0.), z(-s, 0.)]]
            }
            GateKind::PauliX => [[z(0., 0.), z(1., 0.)], [z(1., 0.), z(0., 0.)]],
            GateKind::PauliY => [[z(0., 0.), z(0., -1.)], [z(0., 1.), z(0., 0.)]],
            GateKind::PauliZ => [[z(1., 0.), z(0., 0.)], [z(0., 0.), z(-1., 0.)]],
            GateKind::Phase(phi) => [
                [z(1., 0.), z(0., 0.)],
                [z(0., 0.), Complex64::from_polar(1.0, phi)],
            ],
            GateKind::RotX(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                [[z(c, 0.), z(0., -s)], [z(0., -s), z(c, 0.)]]
            }
            GateKind::RotY(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                [[z(c, 0.), z(-s, 0.)], [z(s, 0.), z(c, 0.)]]
            }
            GateKind::RotZ(t) => [
                [Complex64::from_polar(1.0, -t / 2.0), z(0., 0.)],
                [z(0., 0.), Complex64::from_polar(1.0, t / 2.0)],
            ],
        }
    }

    fn inverse(&self) -> GateKind {
        match *self {
            GateKind::Phase(p) => GateKind::Phase(-p),
            GateKind::RotX(t) => GateKind::RotX(-t),
            GateKind::RotY(t) => GateKind::RotY(-t),
            GateKind::RotZ(t) => GateKind::RotZ(-t),
            other => other,
        }
    }
}

/// One circuit operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    /// Single-qubit gate, optionally multi-controlled with polarities.
    Gate {
        kind: GateKind,
        target: usize,
        controls: Vec<Control>,
    },
    /// Multiply amplitudes on the matching control subspace by e^{i phase};
    /// with no controls this is a global phase.
    PhaseShift { phase: f64, controls: Vec<Control> },
    /// Measure-and-flip reset to |0>; needs a random stream to execute.
    Reset { qubit: usize },
}

/// Ordered gate list over a fixed-width register.
#[derive(Debug, Clone, Default)]
pub struct CircuitIr {
    pub n_qubits: usize,
    pub ops: Vec<Instruction>,
}

impl CircuitIr {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            ops: Vec::new(),
        }
    }

    pub fn gate(&mut self, kind: GateKind, target: usize) -> &mut Self {
        self.ops.push(Instruction::Gate {
            kind,
            target,
            controls: Vec::new(),
        });
        self
    }

    pub fn controlled_gate(
        &mut self,
        kind: GateKind,
        target: usize,
        controls: Vec<Control>,
    ) -> &mut Self {
        self.ops.push(Instruction::Gate {
            kind,
            target,
            controls,
        });
        self
    }

    pub fn phase_shift(&mut self, phase: f64, controls: Vec<Control>) -> &mut Self {
        self.ops.push(Instruction::PhaseShift { phase, controls });
        self
    }

    pub fn extend(&mut self, other: &CircuitIr) -> &mut Self {
        assert_eq!(self.n_qubits, other.n_qubits);
        self.ops.extend(other.ops.iter().cloned());
        self
    }

    /// Inverse circuit; reversal of the op list with each gate inverted.
    /// Reset is irreversible and must not appear here.
    pub fn inverse(&self) -> CircuitIr {
        let ops = self
            .ops
            .iter()
            .rev()
            .map(|op| match op {
                Instruction::Gate {
                    kind,
                    target,
                    controls,
                } => Instruction::Gate {
                    kind: kind.inverse(),
                    target: *target,
                    controls: controls.clone(),
                },
                Instruction::PhaseShift { phase, controls } => Instruction::PhaseShift {
                    phase: -phase,
                    controls: controls.clone(),
                },
                Instruction::Reset { .. } => {
                    panic!("cannot invert a circuit containing Reset")
                }
            })
            .collect();
        CircuitIr {
            n_qubits: self.n_qubits,
            ops,
        }
    }

    /// The same circuit with an extra control attached to every operation.
    pub fn controlled(&self, extra: Control) -> CircuitIr {
        let ops = self
            .ops
            .iter()
            .map(|op| match op {
                Instruction::Gate {
                    kind,
                    target,
                    controls,
                } => {
                    let mut controls = controls.clone();
                    controls.push(extra);
                    Instruction::Gate {
                        kind: *kind,
                        target: *target,
                        controls,
                    }
                }
                Instruction::PhaseShift { phase, controls } => {
                    let mut controls = controls.clone();
                    controls.push(extra);
                    Instruction::PhaseShift {
                        phase: *phase,
                        controls,
                    }
                }
                Instruction::Reset { .. } => {
                    panic!("cannot control a circuit containing Reset")
                }
            })
            .collect();
        CircuitIr {
            n_qubits: self.n_qubits,
            ops,
        }
    }
}

#[inline]
fn controls_satisfied(index: usize, controls: &[Control]) -> bool {
    controls
        .iter()
        .all(|c| ((index >> c.qubit) & 1) == c.value as usize)
}

fn validate_indices(target: Option<usize>, controls: &[Control], n_qubits: usize) -> Result<()> {
    if let Some(t) = target {
        if t >= n_qubits {
            return Err(Error::Layout(format!(
                "target qubit {t} outside register of {n_qubits} qubits"
            )));
        }
        if controls.iter().any(|c| c.qubit == t) {
            return Err(Error::Layout(format!(
                "qubit {t} is both target and control"
            )));
        }
    }
    for c in controls {
        if c.qubit >= n_qubits {
            return Err(Error::Layout(format!(
                "control qubit {} outside register of {n_qubits} qubits",
                c.qubit
            )));
        }
    }
    Ok(())
}

fn apply_gate(amps: &mut [Complex64], kind: &GateKind, target: usize, controls: &[Control]) {
    let m = kind.matrix();
    let bit = 1usize << target;
    let dim = amps.len();
    let mut base = 0usize;
    while base < dim {
        if base & bit == 0 && controls_satisfied(base, controls) {
            let hi = base | bit;
            let a0 = amps[base];
            let a1 = amps[hi];
            amps[base] = m[0][0] * a0 + m[0][1] * a1;
            amps[hi] = m[1][0] * a0 + m[1][1] * a1;
        }
        base += 1;
    }
}

fn apply_phase_shift(amps: &mut [Complex64], phase: f64, controls: &[Control]) {
    let factor = Complex64::from_polar(1.0, phase);
    for (index, amp) in amps.iter_mut().enumerate() {
        if controls_satisfied(index, controls) {
            *amp *= factor;
        }
    }
}

/// Apply a unitary circuit.  Errors on out-of-range indices or on Reset
/// (use [`apply_circuit_with_rng`] for reset-bearing circuits).
pub fn apply_circuit(state: &QuantumState, circuit: &CircuitIr) -> Result<QuantumState> {
    if circuit.n_qubits != state.n_qubits {
        return Err(Error::Layout(format!(
            "circuit is over {} qubits, state over {}",
            circuit.n_qubits, state.n_qubits
        )));
    }
    let mut out = state.clone();
    for op in &circuit.ops {
        match op {
            Instruction::Gate {
                kind,
                target,
                controls,
            } => {
                validate_indices(Some(*target), controls, state.n_qubits)?;
                apply_gate(&mut out.amps, kind, *target, controls);
            }
            Instruction::PhaseShift { phase, controls } => {
                validate_indices(None, controls, state.n_qubits)?;
                apply_phase_shift(&mut out.amps, *phase, controls);
            }
            Instruction::Reset { .. } => {
                return Err(Error::Layout(
                    "Reset requires apply_circuit_with_rng".to_string(),
                ));
            }
        }
    }
    Ok(out)
}

/// Apply a circuit that may contain Reset operations; Reset measures the
/// qubit and flips it to |0> when the outcome was 1.
pub fn apply_circuit_with_rng(
    state: &QuantumState,
    circuit: &CircuitIr,
    rng: &mut impl Rng,
) -> Result<QuantumState> {
    if circuit.n_qubits != state.n_qubits {
        return Err(Error::Layout(format!(
            "circuit is over {} qubits, state over {}",
            circuit.n_qubits, state.n_qubits
        )));
    }
    let mut out = state.clone();
    for op in &circuit.ops {
        match op {
            Instruction::Gate {
                kind,
                target,
                controls,
            } => {
                validate_indices(Some(*target), controls, state.n_qubits)?;
                apply_gate(&mut out.amps, kind, *target, controls);
            }
            Instruction::PhaseShift { phase, controls } => {
                validate_indices(None, controls, state.n_qubits)?;
                apply_phase_shift(&mut out.amps, *phase, controls);
            }
            Instruction::Reset { qubit } => {
                validate_indices(Some(*qubit), &[], state.n_qubits)?;
                let (outcome, collapsed) = measure_collapse(&out, *qubit..*qubit + 1, rng)?;
                out = collapsed;
                if outcome == 1 {
                    apply_gate(&mut out.amps, &GateKind::PauliX, *qubit, &[]);
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// measurement and postselection
// ---------------------------------------------------------------------------

/// Project a contiguous register onto a computational outcome.
///
/// Returns the (unnormalized) state over the remaining qubits together with
/// the exact postselection probability; an empty branch comes back as the
/// zero vector with probability 0.
pub fn postselect(
    state: &QuantumState,
    register: Range<usize>,
    outcome: usize,
) -> (QuantumState, f64) {
    let width = register.end - register.start;
    assert!(register.end <= state.n_qubits);
    assert!(outcome < (1 << width));
    let remaining = state.n_qubits - width;
    let low_mask = (1usize << register.start) - 1;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << remaining];
    for (reduced, slot) in amps.iter_mut().enumerate() {
        let low = reduced & low_mask;
        let high = reduced >> register.start;
        let full = low | (outcome << register.start) | (high << register.end);
        *slot = state.amps[full];
    }
    let reduced = QuantumState {
        n_qubits: remaining,
        amps,
    };
    let prob = reduced.norm_sq();
    (reduced, prob)
}

/// Born-rule measurement of a contiguous register.
///
/// The outcome is drawn from one uniform variate against the cumulative
/// distribution in outcome order; the returned state is the normalized
/// projection over the full register.
pub fn measure_collapse(
    state: &QuantumState,
    register: Range<usize>,
    rng: &mut impl Rng,
) -> Result<(usize, QuantumState)> {
    let total = state.norm_sq();
    if total < DEGENERATE_NORM {
        return Err(Error::DegenerateState(total));
    }
    let width = register.end - register.start;
    let mask = ((1usize << width) - 1) << register.start;
    let n_outcomes = 1usize << width;

    let mut probs = vec![0.0f64; n_outcomes];
    for (index, amp) in state.amps.iter().enumerate() {
        probs[(index & mask) >> register.start] += amp.norm_sqr();
    }
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut outcome = n_outcomes - 1;
    for (o, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = o;
            break;
        }
    }

    let keep = outcome << register.start;
    let inv = 1.0 / probs[outcome].sqrt();
    let amps = state
        .amps
        .iter()
        .enumerate()
        .map(|(index, amp)| {
            if index & mask == keep {
                amp * inv
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok((
        outcome,
        QuantumState {
            n_qubits: state.n_qubits,
            amps,
        },
    ))
}

// ---------------------------------------------------------------------------
// expectation values
// ---------------------------------------------------------------------------

/// <psi| O |psi> for a dense observable on a contiguous register.
///
/// Off-register qubits are traced over, which equals the plain expectation
/// whenever they are in a product state with the register or already
/// projected.
pub fn expectation_dense(
    state: &QuantumState,
    obs: &DenseOperator,
    register: Range<usize>,
) -> Result<f64> {
    if !obs.is_hermitian(1e-10) {
        return Err(Error::InvalidObservable(format!(
            "observable '{}' is not Hermitian",
            obs.label()
        )));
    }
    let width = register.end - register.start;
    assert_eq!(obs.dim(), 1 << width);
    let rest = state.n_qubits - width;
    let low_mask = (1usize << register.start) - 1;
    let mut acc = 0.0;
    let mut block = vec![Complex64::new(0.0, 0.0); 1 << width];
    for outer in 0..(1usize << rest) {
        let low = outer & low_mask;
        let high = outer >> register.start;
        for (s, slot) in block.iter_mut().enumerate() {
            let full = low | (s << register.start) | (high << register.end);
            *slot = state.amps[full];
        }
        acc += obs.quadratic_form(&block).re;
    }
    Ok(acc)
}

/// Expectation of a single Pauli string acting on a contiguous register.
pub fn expectation_pauli_string(
    state: &QuantumState,
    string: &PauliString,
    register: Range<usize>,
) -> f64 {
    let width = register.end - register.start;
    assert_eq!(string.n_sites(), width);
    let mask = ((1usize << width) - 1) << register.start;
    let terms: Vec<Complex64> = state
        .amps
        .iter()
        .enumerate()
        .map(|(index, amp)| {
            if amp.norm_sqr() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let sub = (index & mask) >> register.start;
            let (sub_out, phase) = string.apply_to_basis(sub);
            let out = (index & !mask) | (sub_out << register.start);
            state.amps[out].conj() * phase * amp
        })
        .collect();
    pairwise_sum_complex(&terms).re
}

/// Expectation of a Pauli-sum observable (exact-amplitude mode).
pub fn expectation_pauli_sum(
    state: &QuantumState,
    h: &PauliHamiltonian,
    register: Range<usize>,
) -> f64 {
    h.terms()
        .iter()
        .map(|(c, s)| c * expectation_pauli_string(state, s, register.clone()))
        .sum()
}

/// Shot-mode estimate of a Pauli-sum observable: each term is measured with
/// `shots` Bernoulli samples of its exact outcome distribution.
pub fn expectation_pauli_sum_shots(
    state: &QuantumState,
    h: &PauliHamiltonian,
    register: Range<usize>,
    shots: usize,
    rng: &mut impl Rng,
) -> f64 {
    h.terms()
        .iter()
        .map(|(c, s)| {
            let exact = expectation_pauli_string(state, s, register.clone());
            let p_plus = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
            let mut hits = 0usize;
            for _ in 0..shots {
                if rng.gen::<f64>() < p_plus {
                    hits += 1;
                }
            }
            c * (2.0 * hits as f64 / shots as f64 - 1.0)
        })
        .sum()
}

/// Observable readout policy for chain records: exact amplitudes by default,
/// or per-term Bernoulli sampling of the Pauli decomposition with a fixed
/// shot budget.
#[derive(Debug, Clone, Copy)]
pub struct ObsReadout<'a> {
    dense: &'a DenseOperator,
    pauli: Option<&'a PauliHamiltonian>,
    shots: usize,
}

impl<'a> ObsReadout<'a> {
    pub fn exact(dense: &'a DenseOperator) -> Self {
        Self {
            dense,
            pauli: None,
            shots: 0,
        }
    }

    pub fn with_shots(dense: &'a DenseOperator, pauli: &'a PauliHamiltonian, shots: usize) -> Self {
        Self {
            dense,
            pauli: Some(pauli),
            shots,
        }
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn dense(&self) -> &DenseOperator {
        self.dense
    }

    /// Evaluate <phi|O|phi> for a normalized system vector.
    pub fn eval(&self, phi: &[Complex64], rng: &mut impl Rng) -> f64 {
        match (self.pauli, self.shots) {
            (Some(h), shots) if shots > 0 => {
                let n = h.n_sites();
                let state = QuantumState::from_amplitudes(n, phi.to_vec());
                expectation_pauli_sum_shots(&state, h, 0..n, shots, rng)
            }
            _ => self.dense.quadratic_form(phi).re,
        }
    }
}

// ---------------------------------------------------------------------------
// seeded randomness
// ---------------------------------------------------------------------------

/// Hierarchical substream key: (run, pair index, chain index, step index).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamKey {
    pub run: u64,
    pub pair: u64,
    pub chain: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(run: u64, pair: u64, chain: u64, step: u64) -> Self {
        Self {
            run,
            pair,
            chain,
            step,
        }
    }
}

/// Master seed plus key-derived substreams; identical (seed, key) always
/// yields identical draws regardless of scheduling.
#[derive(Debug, Clone, Copy)]
pub struct RandomStream {
    master: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn substream(&self, key: StreamKey) -> ChaCha8Rng {
        let mut state = self.master;
        for field in [key.run, key.pair, key.chain, key.step] {
            let mixed = splitmix64(&mut state);
            state ^= field.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mixed;
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Draw an index from an explicit probability vector with a single uniform
/// variate (probabilities need not be normalized).
pub fn sample_categorical(probs: &[f64], rng: &mut impl RngCore) -> usize {
    let total: f64 = probs.iter().sum();
    let u = (rng.next_u64() as f64 / (u64::MAX as f64 + 1.0)) * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_tfi, to_dense};
    use rand::SeedableRng;

    fn random_state(n_qubits: usize, seed: u64) -> QuantumState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<Complex64> = (0..(1 << n_qubits))
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        QuantumState::from_amplitudes(n_qubits, amps)
            .normalized()
            .unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let state = random_state(3, 1);
        let out = apply_circuit(&state, &CircuitIr::new(3)).unwrap();
        for (a, b) in state.amplitudes().iter().zip(out.amplitudes()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hadamard_squares_to_identity() {
        let state = random_state(2, 2);
        let mut circuit = CircuitIr::new(2);
        circuit
            .gate(GateKind::Hadamard, 1)
            .gate(GateKind::Hadamard, 1);
        let out = apply_circuit(&state, &circuit).unwrap();
        for (a, b) in state.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn random_circuits_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 4;
            let mut circuit = CircuitIr::new(n);
            for _ in 0..30 {
                let target = rng.gen_range(0..n);
                let kind = match rng.gen_range(0..7) {
                    0 => GateKind::Hadamard,
                    1 => GateKind::PauliX,
                    2 => GateKind::PauliY,
                    3 => GateKind::PauliZ,
                    4 => GateKind::Phase(rng.gen::<f64>() * std::f64::consts::TAU),
                    5 => GateKind::RotY(rng.gen::<f64>() * std::f64::consts::TAU),
                    _ => GateKind::RotZ(rng.gen::<f64>() * std::f64::consts::TAU),
                };
                if rng.gen::<bool>() {
                    let mut ctrl = rng.gen_range(0..n);
                    while ctrl == target {
                        ctrl = rng.gen_range(0..n);
                    }
                    circuit.controlled_gate(
                        kind,
                        target,
                        vec![Control {
                            qubit: ctrl,
                            value: rng.gen::<bool>(),
                        }],
                    );
                } else {
                    circuit.gate(kind, target);
                }
            }
            let state = random_state(n, 100 + trial);
            let out = apply_circuit(&state, &circuit).unwrap();
            assert!((out.norm_sq() - 1.0).abs() < 1e-10);

            // inverse really inverts
            let back = apply_circuit(&out, &circuit.inverse()).unwrap();
            for (a, b) in state.amplitudes().iter().zip(back.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn out_of_range_target_is_layout_error() {
        let state = QuantumState::zero_state(2);
        let mut circuit = CircuitIr::new(2);
        circuit.gate(GateKind::PauliX, 5);
        let mut bad = circuit.clone();
        bad.n_qubits = 2;
        assert!(matches!(apply_circuit(&state, &bad), Err(Error::Layout(_))));
    }

    #[test]
    fn postselect_product_state() {
        // |0>_anc (x) |phi>_sys, ancilla on the high bit.
        let phi = random_state(2, 9);
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[..4].copy_from_slice(phi.amplitudes());
        let full = QuantumState::from_amplitudes(3, amps);
        let (reduced, prob) = postselect(&full, 2..3, 0);
        assert!((prob - 1.0).abs() < 1e-12);
        for (a, b) in reduced.amplitudes().iter().zip(phi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn postselect_branch_probability() {
        // (|0>|a> + |1>|b>)/sqrt(2) on ancilla=1 -> (|b>/sqrt(2), 0.5)
        let a = random_state(1, 11);
        let b = random_state(1, 12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amps = vec![
            a.amplitudes()[0] * s,
            a.amplitudes()[1] * s,
            b.amplitudes()[0] * s,
            b.amplitudes()[1] * s,
        ];
        let full = QuantumState::from_amplitudes(2, amps);
        let (reduced, prob) = postselect(&full, 1..2, 1);
        assert!((prob - 0.5).abs() < 1e-12);
        for (r, e) in reduced.amplitudes().iter().zip(b.amplitudes()) {
            assert!((r - e * s).norm() < 1e-12);
        }
    }

    #[test]
    fn postselect_probabilities_sum_to_one() {
        let state = random_state(5, 21);
        let mut total = 0.0;
        for outcome in 0..8 {
            let (_, p) = postselect(&state, 2..5, outcome);
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn measure_basis_state_is_deterministic() {
        let state = QuantumState::basis(3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (outcome, collapsed) = measure_collapse(&state, 0..3, &mut rng).unwrap();
        assert_eq!(outcome, 5);
        assert!((collapsed.amplitudes()[5].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_is_reproducible_across_streams() {
        let state = {
            let mut c = CircuitIr::new(1);
            c.gate(GateKind::Hadamard, 0);
            apply_circuit(&QuantumState::zero_state(1), &c).unwrap()
        };
        let stream = RandomStream::new(42);
        let key = StreamKey::new(1, 2, 3, 4);
        let (o1, _) = measure_collapse(&state, 0..1, &mut stream.substream(key)).unwrap();
        let (o2, _) = measure_collapse(&state, 0..1, &mut stream.substream(key)).unwrap();
        assert_eq!(o1, o2);
    }

    #[test]
    fn measurement_frequencies_match_born_rule() {
        let state = random_state(2, 33);
        let probs: Vec<f64> = state.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (o, _) = measure_collapse(&state, 0..2, &mut rng).unwrap();
            counts[o] += 1;
        }
        for (o, &count) in counts.iter().enumerate() {
            let p = probs[o];
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                ((count as f64) - n as f64 * p).abs() <= 4.0 * sigma + 1.0,
                "outcome {o}: count {count} vs expected {:.1}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn measure_rejects_degenerate_state() {
        let zero = QuantumState::from_amplitudes(2, vec![Complex64::new(0.0, 0.0); 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            measure_collapse(&zero, 0..1, &mut rng),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn expectation_z_on_basis_states() {
        let h = build_tfi(2, 0.0).unwrap();
        let n = h.n_sites();
        for label in 0..4usize {
            let state = QuantumState::basis(n, label);
            let mut z_string = vec![crate::hamiltonian::PauliOp::I; n];
            z_string[0] = crate::hamiltonian::PauliOp::Z;
            let value = expectation_pauli_string(&state, &PauliString::new(z_string), 0..n);
            let expect = if label & 1 == 0 { 1.0 } else { -1.0 };
            assert!((value - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_x_on_plus_state() {
        let mut c = CircuitIr::new(1);
        c.gate(GateKind::Hadamard, 0);
        let plus = apply_circuit(&QuantumState::zero_state(1), &c).unwrap();
        let x = PauliString::new(vec![crate::hamiltonian::PauliOp::X]);
        assert!((expectation_pauli_string(&plus, &x, 0..1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_matches_dense_quadratic_form() {
        let h = build_tfi(3, 0.9).unwrap();
        let dense = to_dense(&h).unwrap();
        let state = random_state(3, 55);
        let via_pauli = expectation_pauli_sum(&state, &h, 0..3);
        let via_dense = expectation_dense(&state, &dense, 0..3).unwrap();
        let direct = dense.quadratic_form(state.amplitudes()).re;
        assert!((via_pauli - direct).abs() < 1e-10);
        assert!((via_dense - direct).abs() < 1e-10);
    }

    #[test]
    fn pauli_expectation_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let n = 3;
            let state = random_state(n, 200 + trial);
            let ops: Vec<crate::hamiltonian::PauliOp> = (0..n)
                .map(|_| match rng.gen_range(0..4) {
                    0 => crate::hamiltonian::PauliOp::I,
                    1 => crate::hamiltonian::PauliOp::X,
                    2 => crate::hamiltonian::PauliOp::Y,
                    _ => crate::hamiltonian::PauliOp::Z,
                })
                .collect();
            let value = expectation_pauli_string(&state, &PauliString::new(ops), 0..n);
            assert!(value.abs() <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let stream = RandomStream::new(1234);
        let a1 = stream.substream(StreamKey::new(0, 1, 2, 3)).next_u64();
        let a2 = stream.substream(StreamKey::new(0, 1, 2, 3)).next_u64();
        let b = stream.substream(StreamKey::new(0, 1, 2, 4)).next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
    }

    #[test]
    fn reset_moves_qubit_to_zero() {
        let mut c = CircuitIr::new(2);
        c.gate(GateKind::Hadamard, 0);
        c.ops.push(Instruction::Reset { qubit: 0 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = apply_circuit_with_rng(&QuantumState::zero_state(2), &c, &mut rng).unwrap();
        // After reset, qubit 0 reads 0 with certainty.
        let (_, p) = postselect(&out, 0..1, 0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_ranges_are_disjoint_and_complete() {
        let layout = RegisterLayout::for_terms(6, 12);
        assert_eq!(layout.range(Register::System), 0..6);
        assert_eq!(layout.range(Register::Prepare), 6..10);
        assert_eq!(layout.range(Register::Superpose), 10..11);
        assert_eq!(layout.total_qubits(), 11);
    }
}
