//! Simulation of a probe system interacting with a device that is prepared,
//! and kept, in a superposition of its classical parameter values.
//!
//! Two protocols are provided. The coherent one ([`zeno`]) interleaves short
//! joint evolutions with projective measurements that freeze the device in
//! `|phi>`; the incoherent one ([`incoherent`]) redraws a classical device
//! configuration every step. Both converge to unitary evolution under
//! `H_eff = <phi| H_SD |phi>` ([`model::effective_hamiltonian`]).

pub mod cases;
pub mod cli;
pub mod error;
pub mod fit;
pub mod incoherent;
pub mod model;
pub mod qmath;
pub mod zeno;

pub use error::{Error, Result};
