//! Sample-based quantum diagonalization (SQD) engine.
//!
//! The crate post-processes sets of measured electronic configurations
//! (bitstrings over spin-orbitals) into ground-state energy estimates: noisy
//! samples are triaged and repaired by self-consistent configuration
//! recovery, grouped into spin-closed batches, and the molecular Hamiltonian
//! is projected onto each batch and diagonalized with a Davidson solver under
//! a soft total-spin penalty. A fixed-particle-sector statevector simulator
//! of the local unitary cluster Jastrow (LUCJ) ansatz provides classical
//! sample sources, and the analysis module implements energy-variance
//! extrapolation, sector statistics, and recovery/concentration bounds.


pub mod integrals;
pub mod linalg;
pub mod matrix_elements;
pub mod recovery;
pub mod sampler;

pub mod rng;

pub mod solver;
pub mod system;

pub use integrals::{HubbardSpec, IntegralSet, OrbitalRotation};
pub use system::{Determinant, SystemShape};
