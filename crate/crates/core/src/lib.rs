//! Exact state-vector simulation of Floquet-driven qubit chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: devices, drives, the occupation basis, states and site operators.
//! * [`hamiltonian`]: lab-frame, effective and SSH Hamiltonians.
//! * [`propagator`]: time stepping and spectral propagation.
//! * [`fermion`]: free-fermion shortcuts for nearest-neighbour XY chains.
//! * [`protocols`]: the experiments (Rabi sweep, walks, reversal, OTOCs, SSH).
//! * [`analysis`]: spectral estimation, fits, front extraction and readout.
//!
//! Frequencies are linear and in MHz everywhere in the public API; times are
//! in ns. The conversion to angular units happens only inside [`hamiltonian`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bessel;
pub mod error;
pub mod fermion;
pub mod hamiltonian;
pub mod model;
pub mod propagator;
pub mod protocols;
pub mod series;

pub use bessel::bessel_j0;
pub use error::{Error, Result};
