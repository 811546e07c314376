//! Finite-temperature expectation values for small quantum spin systems.
//!
//! The crate implements two estimators for Tr[O e^{-beta H}]/Tr[e^{-beta H}]
//! on the transverse-field Ising model, both built on the Chebyshev series of
//! the imaginary-time propagator:
//!
//! * a sampled-pairs-of-unitaries estimator (`mcmc_spu`) that draws pairs of
//!   Chebyshev orders, runs one shallow walk circuit per pair and a Markov
//!   chain over computational-basis inputs per circuit, and
//! * a conventional-LCU QMETTS baseline (`lcu_qite`).
//!
//! Exact diagonalization (`hamiltonian`, `dense`) provides ground truth,
//! `diagnostics` covers Markov-chain convergence analysis and `resources`
//! does symbolic gate/qubit accounting for both circuit families.

pub mod block_encoding;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod hamiltonian;
pub mod lcu_qite;
pub mod mcmc_spu;
pub mod resources;
pub mod simulator;

pub use error::{Error, Result};
