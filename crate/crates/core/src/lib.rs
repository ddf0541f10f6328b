//! Semiclassical quantization lattices for families of commuting
//! Hamiltonians, and their numerical comparison with joint spectra.
//!
//! The classical side ([`phase`], [`dynamics`], [`invariants`]) extracts the
//! period lattice, cycle actions, Maslov indices and subprincipal integrals
//! of a level set. [`lattice`] turns them into predicted joint eigenvalues,
//! [`quantum`] computes joint spectra of model operators and [`verify`]
//! compares the two. [`runner`] and [`report`] drive complete experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod invariants;
pub mod lattice;
pub mod models;
pub mod phase;
pub mod quantum;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{Error, Hypothesis, Result};
pub use exec::Execution;
pub use models::{JointSymbol, Model, ModelSpec};
pub use phase::{ClassicalSystem, EnergyLevel, PhasePoint};
pub use runner::{ResultBundle, Runner};
