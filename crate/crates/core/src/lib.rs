//! Non-intrusive reduced-order models for second-order mechanical systems.
//!
//! The pipeline simulates a full-order model `M ẍ + E ẋ + K x = B u`
//! ([`newmark`]), compresses the snapshots with POD ([`pod`]), and learns
//! reduced operators either in identity-mass form by regularized least squares
//! ([`opinf`]) or, when the external forces are known, as symmetric definite
//! `(M̂, Ê, K̂)` by a constrained fit ([`copinf`]). [`eval`] compares the
//! resulting models against the full-order trajectories, and [`experiment`]
//! wires everything into reproducible runs.

pub mod copinf;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod mtx;
pub mod newmark;
pub mod opinf;
pub mod pod;
pub mod signal;
pub mod snapshots;

pub use crate::error::{Error, Result};
pub use crate::exec::Execution;
pub use crate::linalg::{Matrix, Vector};
pub use crate::model::{SecondOrderModel, SecondOrderSystem};
