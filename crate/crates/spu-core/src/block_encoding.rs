//! Block encoding of the Hamiltonian and the qubitization walk operator.
//!
//! PREPARE loads the term coefficients onto the A register, SELECT applies
//! the Pauli term indexed by A, and the walk operator W = S * SELECT (with S
//! the reflection through PREPARE|0>) block-encodes Chebyshev polynomials:
//! postselecting A = 0 around W^k yields T_k(-H).  Qubitization sign
//! conventions differ between reflection choices, so the builder calibrates
//! the k = 1 block against the dense -H oracle and flips the reflection's
//! global sign when needed.

use num_complex::Complex64;

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::hamiltonian::{to_dense, PauliHamiltonian, PauliOp};
use crate::simulator::{
    apply_circuit, postselect, CircuitIr, Control, GateKind, QuantumState, RegisterLayout,
};

/// Emit multiplexed-Ry instructions preparing real nonnegative `amplitudes`
/// (unit norm) over the register qubits `base..base + a`, bit 0 at `base`.
///
/// One rotation per binary-tree node: 2^a - 1 for a full tree, minus skipped
/// zero-weight branches.
pub fn amplitude_prep_tree(
    circuit: &mut CircuitIr,
    base: usize,
    a_qubits: usize,
    amplitudes: &[f64],
) {
    assert_eq!(amplitudes.len(), 1 << a_qubits);
    // subtree_norm[level][prefix], level a = leaves.
    let mut norms: Vec<Vec<f64>> = Vec::with_capacity(a_qubits + 1);
    norms.push(amplitudes.iter().map(|v| v * v).collect());
    for _ in 0..a_qubits {
        let prev = norms.last().unwrap();
        let next: Vec<f64> = (0..prev.len() / 2)
            .map(|p| prev[2 * p] + prev[2 * p + 1])
            .collect();
        norms.push(next);
    }
    norms.reverse(); // norms[level][prefix], level 0 = root

    for level in 0..a_qubits {
        let target = base + a_qubits - 1 - level;
        for prefix in 0..(1usize << level) {
            let parent = norms[level][prefix];
            if parent <= 0.0 {
                continue;
            }
            let left = norms[level + 1][2 * prefix].max(0.0).sqrt();
            let right = norms[level + 1][2 * prefix + 1].max(0.0).sqrt();
            let angle = 2.0 * right.atan2(left);
            let controls: Vec<Control> = (0..level)
                .map(|j| Control {
                    qubit: base + a_qubits - 1 - j,
                    value: (prefix >> (level - 1 - j)) & 1 == 1,
                })
                .collect();
            circuit.controlled_gate(GateKind::RotY(angle), target, controls);
        }
    }
}

fn is_power_of_two(x: usize) -> bool {
    x != 0 && x & (x - 1) == 0
}

/// PREPARE_H over the full layout: |0>_A -> sum_k sqrt(c_k) |k>_A.
///
/// For N a power of two this is Hadamards on the site-index qubits plus one
/// Ry(theta) on the term-type qubit; otherwise an exact amplitude-preparation
/// tree over the 2N term indices.
pub fn build_prepare(h: &PauliHamiltonian, layout: &RegisterLayout) -> CircuitIr {
    let n = h.n_sites();
    let a = layout.prep_qubits();
    let base = layout.range(crate::simulator::Register::Prepare).start;
    let mut circuit = CircuitIr::new(layout.total_qubits());
    if is_power_of_two(n) {
        for q in 0..a - 1 {
            circuit.gate(GateKind::Hadamard, base + q);
        }
        circuit.gate(GateKind::RotY(h.theta()), base + a - 1);
    } else {
        let mut amps = vec![0.0f64; 1 << a];
        for (k, (coeff, _)) in h.terms().iter().enumerate() {
            amps[k] = coeff.max(0.0).sqrt();
        }
        amplitude_prep_tree(&mut circuit, base, a, &amps);
    }
    circuit
}

/// SELECT_H: apply Pauli term k to the system conditioned on |k>_A.
/// Self-inverse because every controlled Pauli squares to the identity and
/// distinct control patterns commute.
pub fn build_select(h: &PauliHamiltonian, layout: &RegisterLayout) -> CircuitIr {
    let a = layout.prep_qubits();
    let base = layout.range(crate::simulator::Register::Prepare).start;
    let mut circuit = CircuitIr::new(layout.total_qubits());
    for (k, (_, string)) in h.terms().iter().enumerate() {
        let controls: Vec<Control> = (0..a)
            .map(|b| Control {
                qubit: base + b,
                value: (k >> b) & 1 == 1,
            })
            .collect();
        for (site, op) in string.ops().iter().enumerate() {
            let kind = match op {
                PauliOp::I => continue,
                PauliOp::X => GateKind::PauliX,
                PauliOp::Y => GateKind::PauliY,
                PauliOp::Z => GateKind::PauliZ,
            };
            circuit.controlled_gate(kind, site, controls.clone());
        }
    }
    circuit
}

fn build_reflection(
    prepare: &CircuitIr,
    layout: &RegisterLayout,
    with_global_phase: bool,
) -> CircuitIr {
    let a_range = layout.range(crate::simulator::Register::Prepare);
    let mut circuit = prepare.inverse();
    let anti: Vec<Control> = a_range.map(Control::inactive).collect();
    circuit.phase_shift(std::f64::consts::PI, anti);
    if with_global_phase {
        circuit.phase_shift(std::f64::consts::PI, Vec::new());
    }
    circuit.extend(prepare);
    circuit
}

/// PREPARE/SELECT/reflection/walk circuits for one Hamiltonian.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    h: PauliHamiltonian,
    h_dense: DenseOperator,
    layout: RegisterLayout,
    d_prime: usize,
    prepare: CircuitIr,
    prepare_dagger: CircuitIr,
    select: CircuitIr,
    reflection: CircuitIr,
    walk: CircuitIr,
    reflection_global_phase: bool,
}

impl BlockEncoding {
    /// Build all circuits and calibrate the walk sign so that the
    /// postselected k-th power acts as T_k(-H).
    pub fn new(h: &PauliHamiltonian) -> Result<Self> {
        let d_prime = h.n_terms();
        let layout = RegisterLayout::for_terms(h.n_sites(), d_prime);
        let h_dense = to_dense(h)?;
        let prepare = build_prepare(h, &layout);
        let prepare_dagger = prepare.inverse();
        let select = build_select(h, &layout);

        let mut encoding = Self {
            h: h.clone(),
            h_dense,
            layout,
            d_prime,
            prepare_dagger,
            select: select.clone(),
            reflection: CircuitIr::new(layout.total_qubits()),
            walk: CircuitIr::new(layout.total_qubits()),
            prepare,
            reflection_global_phase: true,
        };
        encoding.assemble(true);

        // Sign calibration: the k = 1 postselected block must equal -H.
        let probe = probe_state(h.n_sites());
        let target: Vec<Complex64> = encoding
            .h_dense
            .matvec(probe.amplitudes())
            .iter()
            .map(|z| -z)
            .collect();
        let (got, _) = encoding.chebyshev_apply(1, &probe)?;
        if vec_distance(got.amplitudes(), &target) > 1e-8 {
            encoding.assemble(false);
            let (flipped, _) = encoding.chebyshev_apply(1, &probe)?;
            if vec_distance(flipped.amplitudes(), &target) > 1e-8 {
                return Err(Error::InvalidModel(
                    "walk sign calibration failed under both reflection signs".to_string(),
                ));
            }
        }
        Ok(encoding)
    }

    fn assemble(&mut self, with_global_phase: bool) {
        self.reflection_global_phase = with_global_phase;
        self.reflection = build_reflection(&self.prepare, &self.layout, with_global_phase);
        let mut walk = CircuitIr::new(self.layout.total_qubits());
        walk.extend(&self.select);
        walk.extend(&self.reflection);
        self.walk = walk;
    }

    pub fn hamiltonian(&self) -> &PauliHamiltonian {
        &self.h
    }

    pub fn hamiltonian_dense(&self) -> &DenseOperator {
        &self.h_dense
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn d_prime(&self) -> usize {
        self.d_prime
    }

    pub fn prepare(&self) -> &CircuitIr {
        &self.prepare
    }

    pub fn prepare_dagger(&self) -> &CircuitIr {
        &self.prepare_dagger
    }

    pub fn select(&self) -> &CircuitIr {
        &self.select
    }

    pub fn reflection(&self) -> &CircuitIr {
        &self.reflection
    }

    pub fn walk(&self) -> &CircuitIr {
        &self.walk
    }

    /// Whether the calibrated reflection kept the global-phase factor
    /// (2|G><G| - I form) or dropped it (I - 2|G><G| form).
    pub fn reflection_has_global_phase(&self) -> bool {
        self.reflection_global_phase
    }

    /// Apply the block-encoded Chebyshev polynomial T_k(-H) to a system
    /// state: PREP, W^k, PREP^dag, postselect all ancillas on 0.
    ///
    /// Returns the unnormalized system vector and the postselection
    /// probability |T_k(-H)|psi>|^2.
    pub fn chebyshev_apply(
        &self,
        order: usize,
        system: &QuantumState,
    ) -> Result<(QuantumState, f64)> {
        let mut state = QuantumState::embed_system(system, &self.layout);
        state = apply_circuit(&state, &self.prepare)?;
        for _ in 0..order {
            state = apply_circuit(&state, &self.walk)?;
        }
        state = apply_circuit(&state, &self.prepare_dagger)?;
        let (reduced, prob) = postselect(&state, self.layout.ancilla_range(), 0);
        Ok((reduced, prob))
    }

    /// Dense matrix of the postselected PREP^dag SELECT PREP block; test
    /// oracle for the encoding identity <0|P' S P|0> = H.
    pub fn encoded_block_dense(&self) -> Result<DenseOperator> {
        let dim = 1usize << self.h.n_sites();
        let mut block = DenseOperator::zeros(dim, "encoded-H");
        for col in 0..dim {
            let sys = QuantumState::basis(self.h.n_sites(), col);
            let mut state = QuantumState::embed_system(&sys, &self.layout);
            state = apply_circuit(&state, &self.prepare)?;
            state = apply_circuit(&state, &self.select)?;
            state = apply_circuit(&state, &self.prepare_dagger)?;
            let (reduced, _) = postselect(&state, self.layout.ancilla_range(), 0);
            for row in 0..dim {
                block.set(row, col, reduced.amplitudes()[row]);
            }
        }
        Ok(block)
    }
}

fn probe_state(n_sites: usize) -> QuantumState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e1f_ca1b);
    let amps: Vec<Complex64> = (0..(1 << n_sites))
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    QuantumState::from_amplitudes(n_sites, amps)
        .normalized()
        .unwrap()
}

fn vec_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Dense T_k(-H) by the three-term recurrence; the oracle the circuits are
/// checked against.
pub fn chebyshev_dense(order: usize, h: &PauliHamiltonian) -> Result<DenseOperator> {
    let minus_h = to_dense(h)?.scaled(-1.0);
    let dim = minus_h.dim();
    let mut t_prev = DenseOperator::identity(dim);
    if order == 0 {
        t_prev.set_label("T_0(-H)");
        return Ok(t_prev);
    }
    let mut t_curr = minus_h.clone();
    for _ in 1..order {
        let next = minus_h.matmul(&t_curr).scaled(2.0).sub(&t_prev);
        t_prev = t_curr;
        t_curr = next;
    }
    t_curr.set_label(format!("T_{}(-H)", order));
    Ok(t_curr)
}
