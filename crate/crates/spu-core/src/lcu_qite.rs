//! Chebyshev series of the imaginary-time propagator and the QMETTS baseline.
//!
//! e^{-(beta/2)E} = I_0(beta/2) + 2 sum_k I_k(beta/2) T_k(-E) on E in [-1,1];
//! the truncation order is chosen so the uniform error stays below nu, and
//! the coefficient 1-norm then sits within nu of e^{beta/2}.

use num_complex::Complex64;
use rand::Rng;

use crate::block_encoding::{amplitude_prep_tree, BlockEncoding};
use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::hamiltonian::{to_dense, PauliHamiltonian};
use crate::simulator::{
    apply_circuit, ceil_log2, postselect, sample_categorical, CircuitIr, Control, ObsReadout,
    QuantumState,
};

/// Guard for the Bessel power series (no asymptotic branch below this).
pub const BESSEL_GUARD: f64 = 500.0;

/// Modified Bessel function of the first kind, I_k(x), by the ascending
/// power series with term-ratio stop at relative 1e-16.
pub fn bessel_i(order: usize, x: f64) -> Result<f64> {
    if !(0.0..=BESSEL_GUARD).contains(&x) || order > BESSEL_GUARD as usize {
        return Err(Error::Range(format!(
            "bessel_i(order={order}, x={x}) outside guard [0, {BESSEL_GUARD}]"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    let half = x / 2.0;
    // (x/2)^k / k! as an incremental product to dodge intermediate overflow.
    let mut term = 1.0f64;
    for i in 1..=order {
        term *= half / i as f64;
    }
    let mut sum = term;
    let mut j = 0usize;
    loop {
        j += 1;
        term *= half * half / (j as f64 * (j + order) as f64);
        sum += term;
        if term < sum.abs() * 1e-16 && (j as f64) > half {
            break;
        }
        if j > 100_000 {
            break;
        }
    }
    Ok(sum)
}

/// Truncation order d guaranteeing uniform error <= nu for the series of
/// e^{-(beta/2)x} over x in [-1, 1]:
///
///   d = ceil( sqrt( 2 ln(4 e^{beta/2}/nu) * max[e^2 beta/2, ln(2 e^{beta/2}/nu)] ) )
pub fn truncation_order(beta: f64, nu: f64) -> Result<u32> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be >= 0, got {beta}"
        )));
    }
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu must lie in (0,1), got {nu}"
        )));
    }
    // Logs expanded symbolically so large beta cannot overflow.
    let l1 = 4.0f64.ln() + beta / 2.0 - nu.ln();
    let l2 = (std::f64::consts::E.powi(2) * beta / 2.0).max(2.0f64.ln() + beta / 2.0 - nu.ln());
    Ok((2.0 * l1 * l2).sqrt().ceil() as u32)
}

/// Truncated Chebyshev expansion of e^{-(beta/2)H}: coefficients, sampling
/// probabilities and the coefficient 1-norm.
#[derive(Debug, Clone)]
pub struct QiteExpansion {
    beta: f64,
    nu: f64,
    order: u32,
    coeffs: Vec<f64>,
    probs: Vec<f64>,
    norm1: f64,
}

impl QiteExpansion {
    pub fn build(beta: f64, nu: f64) -> Result<Self> {
        let order = truncation_order(beta, nu)?;
        let half = beta / 2.0;
        let mut coeffs = Vec::with_capacity(order as usize + 1);
        coeffs.push(bessel_i(0, half)?);
        for n in 1..=order as usize {
            coeffs.push(2.0 * bessel_i(n, half)?);
        }
        let norm1: f64 = coeffs.iter().sum();
        let probs: Vec<f64> = coeffs.iter().map(|c| c / norm1).collect();
        Ok(Self {
            beta,
            nu,
            order,
            coeffs,
            probs,
            norm1,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    /// Draw one Chebyshev order from {p_n}.
    pub fn sample_order(&self, rng: &mut impl Rng) -> usize {
        sample_categorical(&self.probs, rng)
    }

    /// Mean sampled order sum_n n p_n.
    pub fn average_order(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Telescoped closed form bounding the mean order:
    /// (beta/2) e^{-beta/2} [I_0 + I_1 - I_d - I_{d+1}] at beta/2.
    pub fn average_order_bound(&self) -> Result<f64> {
        let half = self.beta / 2.0;
        let d = self.order as usize;
        let sum =
            bessel_i(0, half)? + bessel_i(1, half)? - bessel_i(d, half)? - bessel_i(d + 1, half)?;
        Ok(half * (-half).exp() * sum)
    }
}

/// Dense sum_{n<=d} c_n T_n(-H) through the running recurrence.
pub fn truncated_qite_dense(exp: &QiteExpansion, h: &PauliHamiltonian) -> Result<DenseOperator> {
    let minus_h = to_dense(h)?.scaled(-1.0);
    let dim = minus_h.dim();
    let mut acc = DenseOperator::identity(dim).scaled(exp.coeffs()[0]);
    if exp.order() == 0 {
        acc.set_label("qite-series");
        return Ok(acc);
    }
    let mut t_prev = DenseOperator::identity(dim);
    let mut t_curr = minus_h.clone();
    acc = acc.add(&t_curr.scaled(exp.coeffs()[1]));
    for n in 2..=exp.order() as usize {
        let next = minus_h.matmul(&t_curr).scaled(2.0).sub(&t_prev);
        t_prev = t_curr;
        t_curr = next;
        acc = acc.add(&t_curr.scaled(exp.coeffs()[n]));
    }
    acc.set_label("qite-series");
    Ok(acc)
}

/// Normalized truncated propagator applied to a system state.
///
/// Returns sum_n (c_n/||c||_1) T_n(-H) |psi> and its squared norm, which is
/// the success probability of the conventional postselected circuit.
pub fn qite_apply_truncated(
    exp: &QiteExpansion,
    h: &PauliHamiltonian,
    state: &QuantumState,
) -> Result<(QuantumState, f64)> {
    let m = truncated_qite_dense(exp, h)?.scaled(1.0 / exp.norm1());
    let amps = m.matvec(state.amplitudes());
    let out = QuantumState::from_amplitudes(state.n_qubits(), amps);
    let prob = out.norm_sq();
    Ok((out, prob))
}

/// Full-circuit variant of [`qite_apply_truncated`] with an explicit
/// coefficient register (validation mode for small systems).
///
/// Register layout: system 0..N, walk ancillas A above it, coefficient
/// register of ceil(log2(d+1)) qubits on top; both ancilla registers are
/// postselected on zero.
pub fn qite_apply_conventional(
    exp: &QiteExpansion,
    be: &BlockEncoding,
    state: &QuantumState,
) -> Result<(QuantumState, f64)> {
    let n = be.hamiltonian().n_sites();
    let a = be.layout().prep_qubits();
    let b = ceil_log2(exp.order() as usize + 1);
    let total = n + a + b;
    let coef_base = n + a;

    let mut circuit = CircuitIr::new(total);
    let mut coef_amps = vec![0.0f64; 1 << b];
    for (k, p) in exp.probs().iter().enumerate() {
        coef_amps[k] = p.sqrt();
    }
    amplitude_prep_tree(&mut circuit, coef_base, b, &coef_amps);

    let widen = |ops: &CircuitIr| CircuitIr {
        n_qubits: total,
        ops: ops.ops.clone(),
    };
    circuit.extend(&widen(be.prepare()));
    for order in 1..=exp.order() as usize {
        let mut walk = widen(be.walk());
        for bit in 0..b {
            walk = walk.controlled(Control {
                qubit: coef_base + bit,
                value: (order >> bit) & 1 == 1,
            });
        }
        for _ in 0..order {
            circuit.extend(&walk);
        }
    }
    circuit.extend(&widen(be.prepare_dagger()));
    let tail = {
        let mut prep = CircuitIr::new(total);
        amplitude_prep_tree(&mut prep, coef_base, b, &coef_amps);
        prep.inverse()
    };
    circuit.extend(&tail);

    let mut full = QuantumState::from_amplitudes(total, {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << total];
        amps[..state.dim()].copy_from_slice(state.amplitudes());
        amps
    });
    full = apply_circuit(&full, &circuit)?;
    let (reduced, prob) = postselect(&full, n..total, 0);
    Ok((reduced, prob))
}

// ---------------------------------------------------------------------------
// QMETTS baseline
// ---------------------------------------------------------------------------

/// One QMETTS Markov chain: visited labels and per-step observable values.
#[derive(Debug, Clone)]
pub struct MettsRecord {
    pub beta: f64,
    pub labels: Vec<usize>,
    pub obs_values: Vec<f64>,
    pub burn_in: usize,
}

impl MettsRecord {
    /// Post-burn-in mean of the recorded observable values.
    pub fn mean(&self) -> f64 {
        let tail = &self.obs_values[self.burn_in.min(self.obs_values.len())..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Naive (autocorrelation-blind) standard error of the mean.
    pub fn naive_stderr(&self) -> f64 {
        let tail = &self.obs_values[self.burn_in.min(self.obs_values.len())..];
        let n = tail.len() as f64;
        let mean = self.mean();
        let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn post_burn_in(&self) -> &[f64] {
        &self.obs_values[self.burn_in.min(self.obs_values.len())..]
    }
}

/// Run the QMETTS chain: evolve a computational-basis state through the
/// truncated propagator, record the observable, collapse back to the basis.
///
/// The propagator is the dense truncated series (mathematically equal to the
/// postselected conventional circuit); expectation values are exact.
pub fn qmetts_run(
    h: &PauliHamiltonian,
    obs: &ObsReadout,
    exp: &QiteExpansion,
    steps: usize,
    burn_in: usize,
    rng: &mut impl Rng,
) -> Result<MettsRecord> {
    if steps <= burn_in {
        return Err(Error::InvalidParameter(format!(
            "steps ({steps}) must exceed burn_in ({burn_in})"
        )));
    }
    let m = truncated_qite_dense(exp, h)?;
    let dim = m.dim();
    let mut label = rng.gen_range(0..dim);
    let mut labels = Vec::with_capacity(steps);
    let mut obs_values = Vec::with_capacity(steps);
    for _ in 0..steps {
        let col: Vec<Complex64> = (0..dim).map(|row| m.get(row, label)).collect();
        let norm_sq: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq < 1e-300 {
            return Err(Error::DegenerateState(norm_sq));
        }
        let phi: Vec<Complex64> = col.iter().map(|z| z / norm_sq.sqrt()).collect();
        labels.push(label);
        obs_values.push(obs.eval(&phi, rng));
        let weights: Vec<f64> = phi.iter().map(|z| z.norm_sqr()).collect();
        label = sample_categorical(&weights, rng);
    }
    Ok(MettsRecord {
        beta: exp.beta(),
        labels,
        obs_values,
        burn_in,
    })
}

/// Exact METTS transition kernel p(i -> j) = |<j|e^{-(beta/2)H}|i>|^2 / P_i
/// together with the weights P_i = <i|e^{-beta H}|i>; dense oracle for the
/// stationarity identity sum_i (P_i/Z) p(i->j) = P_j/Z.
pub fn qmetts_exact_kernel(h: &PauliHamiltonian, beta: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let dense = to_dense(h)?;
    let half = dense.hermitian_function(|e| (-0.5 * beta * e).exp(), "exp(-bH/2)")?;
    let dim = dense.dim();
    let mut weights = vec![0.0f64; dim];
    let mut kernel = vec![vec![0.0f64; dim]; dim];
    for i in 0..dim {
        let mut p_i = 0.0;
        for j in 0..dim {
            p_i += half.get(j, i).norm_sqr();
        }
        weights[i] = p_i;
        for j in 0..dim {
            kernel[i][j] = half.get(j, i).norm_sqr() / p_i;
        }
    }
    Ok((kernel, weights))
}
