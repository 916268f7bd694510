//! Quantum-information driven ansatz construction for molecular VQE.
//!
//! The pipeline runs from FCIDUMP integrals through MP2 and natural
//! orbitals to pairwise qubit mutual information, turns the strongest pairs
//! into CNOT entangler blocks, and scores those blocks with batched
//! statevector VQE against ladder and random baselines.

pub mod fcidump;
pub mod meanfield;
pub mod encoding;
pub mod linalg;
pub mod states;
pub mod natorb;
pub mod ansatz;
pub mod vqe;
pub mod harness;
