//! Rotational dynamics of a non-polar diatomic molecule in a far-detuned,
//! linearly polarised laser field.
//!
//! The crate covers the classical axis motion (closed-form elliptic solution
//! and an RK4 integrator), the quantum rotor in a truncated `|j, m⟩` basis
//! with unitary, Lindblad and quantum-trajectory propagation, the light-dressed
//! energy spectrum, and spherical Wigner functions. All quantities are
//! dimensionless: `ħ = 1`, energies in `ħ²/(2Θ)`, time `τ = t ħ/(2Θ)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod classical;
pub mod error;
pub mod evolution;
pub mod runner;
pub mod specfun;
pub mod spectrum;
pub mod wigner;

pub use error::{Error, Result};
