//! Symbolic circuit costing.
//!
//! Gates are counted against a fixed rule table: multicontrolled gates nest
//! recursively, shedding one control per level between two Toffolis, and a
//! Toffoli is charged as three single-qubit non-Clifford rotations plus a
//! fixed Clifford tally.  Only Clifford/rotation totals are tracked; the
//! counts are theta-independent by construction.

use crate::error::{Error, Result};
use crate::lcu_qite::{truncation_order, QiteExpansion};
use crate::simulator::ceil_log2;

/// Clifford and non-Clifford rotation totals of a circuit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub cliffords: u64,
    pub rotations: u64,
}

impl GateCounts {
    pub fn add(&self, other: &GateCounts) -> GateCounts {
        GateCounts {
            cliffords: self.cliffords + other.cliffords,
            rotations: self.rotations + other.rotations,
        }
    }

    fn scaled(&self, factor: u64) -> GateCounts {
        GateCounts {
            cliffords: self.cliffords * factor,
            rotations: self.rotations * factor,
        }
    }
}

/// Decomposition rule table.
#[derive(Debug, Clone, Copy)]
pub struct CostModel {
    /// Rotations per Toffoli.
    pub rotations_per_toffoli: u64,
    /// Clifford gates per Toffoli (CNOT/Hadamard class).
    pub cliffords_per_toffoli: u64,
    /// Cost PREP_H as Hadamards plus one rotation for every N (the uniform
    /// power-of-two form); when false, non-power-of-two N pays the generic
    /// amplitude-preparation tree.
    pub uniform_prepare: bool,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            rotations_per_toffoli: 3,
            cliffords_per_toffoli: 8,
            uniform_prepare: true,
        }
    }
}

/// Symbolic gate vocabulary for the circuit families counted here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolicGate {
    Clifford(u64),
    Rotation(u64),
    Toffoli(u64),
    /// Pauli string of `weight` factors under `controls` controls, of which
    /// `anti` need polarity-flip conjugation.
    MultiControlledPauli {
        controls: u32,
        anti: u32,
        weight: u32,
    },
    /// Phase on a control pattern; pi-multiple phases keep a Clifford base.
    MultiControlledPhase {
        controls: u32,
        anti: u32,
        clifford_base: bool,
    },
    /// Generic state preparation over 2^qubits amplitudes.
    AmplitudePrep {
        qubits: u32,
    },
    /// PREP_H for an N-site model.
    PrepareTfi {
        n_sites: u32,
    },
}

/// Fold the rule table over a symbolic gate list.
pub fn count_circuit(gates: &[SymbolicGate], model: &CostModel) -> GateCounts {
    let toffoli = GateCounts {
        cliffords: model.cliffords_per_toffoli,
        rotations: model.rotations_per_toffoli,
    };
    let mut total = GateCounts::default();
    for gate in gates {
        let contribution = match *gate {
            SymbolicGate::Clifford(n) => GateCounts {
                cliffords: n,
                rotations: 0,
            },
            SymbolicGate::Rotation(n) => GateCounts {
                cliffords: 0,
                rotations: n,
            },
            SymbolicGate::Toffoli(n) => toffoli.scaled(n),
            SymbolicGate::MultiControlledPauli {
                controls,
                anti,
                weight,
            } => {
                let ladder = if controls >= 2 {
                    toffoli.scaled(2 * (controls as u64 - 1))
                } else {
                    GateCounts::default()
                };
                ladder.add(&GateCounts {
                    cliffords: weight as u64 + 2 * anti as u64,
                    rotations: 0,
                })
            }
            SymbolicGate::MultiControlledPhase {
                controls,
                anti,
                clifford_base,
            } => {
                let ladder = if controls >= 2 {
                    toffoli.scaled(2 * (controls as u64 - 1))
                } else {
                    GateCounts::default()
                };
                let base = if clifford_base {
                    GateCounts {
                        cliffords: 1,
                        rotations: 0,
                    }
                } else if controls >= 1 {
                    GateCounts {
                        cliffords: 2,
                        rotations: 3,
                    }
                } else {
                    GateCounts {
                        cliffords: 0,
                        rotations: 1,
                    }
                };
                ladder.add(&base).add(&GateCounts {
                    cliffords: 2 * anti as u64,
                    rotations: 0,
                })
            }
            SymbolicGate::AmplitudePrep { qubits } => GateCounts {
                rotations: (1u64 << qubits) - 1,
                cliffords: (1u64 << qubits).saturating_sub(2),
            },
            SymbolicGate::PrepareTfi { n_sites } => GateCounts {
                cliffords: ceil_log2(n_sites as usize) as u64,
                rotations: 1,
            },
        };
        total = total.add(&contribution);
    }
    total
}

fn prepare_gate(n_sites: usize, model: &CostModel) -> SymbolicGate {
    if model.uniform_prepare || n_sites.is_power_of_two() {
        SymbolicGate::PrepareTfi {
            n_sites: n_sites as u32,
        }
    } else {
        SymbolicGate::AmplitudePrep {
            qubits: ceil_log2(2 * n_sites) as u32,
        }
    }
}

fn zero_bits(value: usize, width: usize) -> u32 {
    (0..width).filter(|b| value >> b & 1 == 0).count() as u32
}

/// One walk step W_H = S_H * SELECT_H with `extra` controls attached to the
/// control-sensitive parts (select terms and the reflection phase; the
/// reflection's PREP conjugations stay uncontrolled).
pub fn walk_gates(n_sites: usize, extra: u32, model: &CostModel) -> Vec<SymbolicGate> {
    let a = ceil_log2(2 * n_sites);
    let mut gates = Vec::new();
    // SELECT: N two-site bonds then N field terms.
    for k in 0..2 * n_sites {
        gates.push(SymbolicGate::MultiControlledPauli {
            controls: a as u32 + extra,
            anti: zero_bits(k, a),
            weight: if k < n_sites { 2 } else { 1 },
        });
    }
    // Reflection: PREP^dag, phase on the all-zero pattern, PREP.
    gates.push(prepare_gate(n_sites, model));
    gates.push(SymbolicGate::MultiControlledPhase {
        controls: (a as u32 - 1) + extra,
        anti: a as u32,
        clifford_base: true,
    });
    gates.push(prepare_gate(n_sites, model));
    gates
}

/// Full sampled-pair circuit U_mn (superposition Hadamards, PREP_H pair and
/// m + n singly-controlled walk steps).
pub fn umn_gates(n_sites: usize, m: usize, n: usize, model: &CostModel) -> Vec<SymbolicGate> {
    let mut gates = vec![SymbolicGate::Clifford(2)];
    gates.push(prepare_gate(n_sites, model));
    gates.push(prepare_gate(n_sites, model));
    let walk = walk_gates(n_sites, 1, model);
    for _ in 0..m + n {
        gates.extend(walk.iter().copied());
    }
    gates
}

/// Conventional coefficient-LCU circuit: amplitude-prepared coefficient
/// register of ceil(log2(d+1)) qubits, then sum_k k walk steps each carrying
/// the full coefficient control pattern.
pub fn conventional_gates(n_sites: usize, d: u32, model: &CostModel) -> Vec<SymbolicGate> {
    let b = ceil_log2(d as usize + 1);
    let mut gates = vec![
        SymbolicGate::AmplitudePrep { qubits: b as u32 },
        SymbolicGate::AmplitudePrep { qubits: b as u32 },
    ];
    gates.push(prepare_gate(n_sites, model));
    gates.push(prepare_gate(n_sites, model));
    let walk = walk_gates(n_sites, b as u32, model);
    for k in 1..=d as usize {
        // polarity conjugation of the coefficient pattern, once per U_k
        gates.push(SymbolicGate::Clifford(2 * zero_bits(k, b) as u64));
        for _ in 0..k {
            gates.extend(walk.iter().copied());
        }
    }
    gates
}

/// Circuit family for qubit accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Conventional,
    McmcSpu,
}

/// Total qubits: system + walk ancillas + superposition qubit, plus the
/// coefficient register for the conventional circuit.
pub fn qubit_count(n_sites: usize, method: Method, d: u32) -> Result<u64> {
    if n_sites < 2 {
        return Err(Error::InvalidModel(format!(
            "need at least 2 sites, got {n_sites}"
        )));
    }
    let base = (n_sites + ceil_log2(2 * n_sites) + 1) as u64;
    Ok(match method {
        Method::McmcSpu => base,
        Method::Conventional => base + ceil_log2(d as usize + 1) as u64,
    })
}

/// Physical-error-rate ceiling for probabilistic error cancellation over
/// teleported analog rotations: p <= (15/2) / N_rotation.
pub fn star_budget(rotations: f64) -> Result<f64> {
    if rotations < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "rotation count must be >= 1, got {rotations}"
        )));
    }
    Ok(7.5 / rotations)
}

/// One row of the conventional-vs-sampled comparison.
#[derive(Debug, Clone, Copy)]
pub struct CostRow {
    pub n_sites: usize,
    pub qubits_conventional: u64,
    pub qubits_spu: u64,
    pub conventional: GateCounts,
    pub spu_max: GateCounts,
    pub spu_avg_rotations: f64,
    pub spu_avg_cliffords: f64,
}

/// Compare circuit costs over a grid of system sizes at fixed (beta, nu).
///
/// Walk-step counts: sum_{k<=d} k for the conventional circuit, 2d for the
/// worst sampled pair (m = n = d) and 2 d_average for the sampling-weighted
/// mean circuit.
pub fn compare_costs(
    n_grid: &[usize],
    beta: f64,
    nu: f64,
    model: &CostModel,
) -> Result<Vec<CostRow>> {
    let d = truncation_order(beta, nu)?;
    let exp = QiteExpansion::build(beta, nu)?;
    let d_avg = exp.average_order();
    n_grid
        .iter()
        .map(|&n| {
            let conventional = count_circuit(&conventional_gates(n, d, model), model);
            let spu_max = count_circuit(&umn_gates(n, d as usize, d as usize, model), model);
            let walk = count_circuit(&walk_gates(n, 1, model), model);
            let fixed = count_circuit(&umn_gates(n, 0, 0, model), model);
            let spu_avg_rotations = fixed.rotations as f64 + 2.0 * d_avg * walk.rotations as f64;
            let spu_avg_cliffords = fixed.cliffords as f64 + 2.0 * d_avg * walk.cliffords as f64;
            Ok(CostRow {
                n_sites: n,
                qubits_conventional: qubit_count(n, Method::Conventional, d)?,
                qubits_spu: qubit_count(n, Method::McmcSpu, d)?,
                conventional,
                spu_max,
                spu_avg_rotations,
                spu_avg_cliffords,
            })
        })
        .collect()
}
