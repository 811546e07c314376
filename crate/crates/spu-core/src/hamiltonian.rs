//! Transverse-field Ising model and exact-diagonalization oracles.
//!
//! The model on N sites with periodic boundary is
//!
//!   H = sum_j J x_j x_{j+1} + h y_j,   J = cos^2(theta/2)/N,  h = sin^2(theta/2)/N,
//!
//! so the coefficient 1-norm is exactly one and the spectrum lies in [-1, 1].
//! Everything downstream (block encoding, Chebyshev expansion) relies on that
//! normalization.

use num_complex::Complex64;

use crate::dense::{DenseOperator, DENSE_GUARD};
use crate::error::{Error, Result};

/// Boltzmann constant in eV/K (CODATA).
pub const BOLTZMANN_EV_PER_K: f64 = 8.617_333_262e-5;

/// Single-site Pauli operator tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

/// A Pauli string as one tag per site, site 0 on index bit 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString(Vec<PauliOp>);

impl PauliString {
    pub fn new(ops: Vec<PauliOp>) -> Self {
        Self(ops)
    }

    pub fn identity(n_sites: usize) -> Self {
        Self(vec![PauliOp::I; n_sites])
    }

    pub fn n_sites(&self) -> usize {
        self.0.len()
    }

    pub fn op(&self, site: usize) -> PauliOp {
        self.0[site]
    }

    pub fn ops(&self) -> &[PauliOp] {
        &self.0
    }

    /// Number of non-identity sites.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|op| **op != PauliOp::I).count()
    }

    /// Image of a computational basis state: P|i> = phase * |j>.
    pub fn apply_to_basis(&self, index: usize) -> (usize, Complex64) {
        let mut j = index;
        let mut phase = Complex64::new(1.0, 0.0);
        for (site, op) in self.0.iter().enumerate() {
            let bit = 1usize << site;
            match op {
                PauliOp::I => {}
                PauliOp::X => j ^= bit,
                PauliOp::Y => {
                    // Y|0> = i|1>, Y|1> = -i|0>
                    phase *= if index & bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    };
                    j ^= bit;
                }
                PauliOp::Z => {
                    if index & bit != 0 {
                        phase = -phase;
                    }
                }
            }
        }
        (j, phase)
    }

    pub fn to_dense(&self) -> DenseOperator {
        let dim = 1usize << self.0.len();
        let mut m = DenseOperator::zeros(dim, "pauli-string");
        for col in 0..dim {
            let (row, phase) = self.apply_to_basis(col);
            m.set(row, col, phase);
        }
        m
    }
}

/// Weighted sum of Pauli strings with nonnegative coefficients.
#[derive(Debug, Clone)]
pub struct PauliHamiltonian {
    n_sites: usize,
    theta: f64,
    terms: Vec<(f64, PauliString)>,
}

impl PauliHamiltonian {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient_norm1(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }
}

/// Build the periodic transverse-field Ising model.
///
/// Produces exactly 2N terms: N two-site XX bonds (including the wraparound
/// bond N-1 -- 0) followed by N single-site Y terms.  The N=2 chain keeps its
/// two identical bonds so the term count stays 2N for the PREPARE register.
pub fn build_tfi(n_sites: usize, theta: f64) -> Result<PauliHamiltonian> {
    if n_sites < 2 {
        return Err(Error::InvalidModel(format!(
            "transverse-field Ising model needs at least 2 sites, got {n_sites}"
        )));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidModel(format!(
            "theta must lie in [0, pi], got {theta}"
        )));
    }
    let j_coupling = (theta / 2.0).cos().powi(2) / n_sites as f64;
    let h_field = (theta / 2.0).sin().powi(2) / n_sites as f64;

    let mut terms = Vec::with_capacity(2 * n_sites);
    for site in 0..n_sites {
        let mut ops = vec![PauliOp::I; n_sites];
        ops[site] = PauliOp::X;
        ops[(site + 1) % n_sites] = PauliOp::X;
        terms.push((j_coupling, PauliString::new(ops)));
    }
    for site in 0..n_sites {
        let mut ops = vec![PauliOp::I; n_sites];
        ops[site] = PauliOp::Y;
        terms.push((h_field, PauliString::new(ops)));
    }
    Ok(PauliHamiltonian {
        n_sites,
        theta,
        terms,
    })
}

/// Dense matrix of a Pauli-sum Hamiltonian (guarded).
pub fn to_dense(h: &PauliHamiltonian) -> Result<DenseOperator> {
    if h.n_sites > DENSE_GUARD {
        return Err(Error::OracleSize {
            n: h.n_sites,
            guard: DENSE_GUARD,
        });
    }
    let dim = 1usize << h.n_sites;
    let mut m = DenseOperator::zeros(dim, "H");
    for (coeff, string) in &h.terms {
        for col in 0..dim {
            let (row, phase) = string.apply_to_basis(col);
            m.add_assign_at(row, col, phase * *coeff);
        }
    }
    Ok(m)
}

/// Canonical ensemble average Tr[O e^{-beta H}] / Tr[e^{-beta H}].
///
/// Computed in the eigenbasis of H with Gibbs weights referenced to the
/// ground energy, so arbitrarily large beta stays finite.
pub fn exact_canonical_average(h: &DenseOperator, obs: &DenseOperator, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta must be finite, got {beta}"
        )));
    }
    if !obs.is_hermitian(1e-10) {
        return Err(Error::InvalidObservable(format!(
            "observable '{}' is not Hermitian",
            obs.label()
        )));
    }
    let (vals, vecs) = h.hermitian_eigen()?;
    let e0 = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let dim = h.dim();
    let mut z = 0.0;
    let mut acc = 0.0;
    for k in 0..dim {
        let w = (-beta * (vals[k] - e0)).exp();
        if w == 0.0 {
            continue;
        }
        let col: Vec<Complex64> = (0..dim).map(|i| vecs.get(i, k)).collect();
        acc += w * obs.quadratic_form(&col).re;
        z += w;
    }
    Ok(acc / z)
}

/// Convenience wrapper taking the Pauli form of both operators.
pub fn exact_canonical_average_pauli(
    h: &PauliHamiltonian,
    obs: &DenseOperator,
    beta: f64,
) -> Result<f64> {
    exact_canonical_average(&to_dense(h)?, obs, beta)
}

/// Spectral report for mapping physical temperatures onto the dimensionless
/// inverse temperature used everywhere else.
#[derive(Debug, Clone, Copy)]
pub struct RescaleReport {
    /// Largest |eigenvalue| of the 1-norm-normalized Hamiltonian.
    pub e_max: f64,
}

impl RescaleReport {
    /// beta = E_target / (k_B T) with the spectral radius pinned to E_target.
    pub fn beta_for(&self, t_kelvin: f64, e_target_ev: f64) -> f64 {
        e_target_ev / (BOLTZMANN_EV_PER_K * t_kelvin)
    }
}

pub fn rescale_report(h: &PauliHamiltonian) -> Result<RescaleReport> {
    let dense = to_dense(h)?;
    Ok(RescaleReport {
        e_max: dense.operator_norm_hermitian()?,
    })
}
