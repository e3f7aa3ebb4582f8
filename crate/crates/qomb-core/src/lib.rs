//! Core library for reasoning about quantum and classical combs arising in
//! delegated measurement-based quantum computation.
//!
//! The crate is organised bottom-up:
//!
//! * [`operators`]: dense complex operators on labeled tensor factors
//!   (kron, partial trace, partial transpose, link product, PSD checks).
//! * [`combs`]: time-step structures, comb validation, classical combs,
//!   classical-quantum combs, assembly and multi-round powers.
//! * [`gflow`]: open graphs, gflow verification and enumeration, correction
//!   sets, induced DAGs, order compatibility.
//! * [`mbqc`]: graph states, measured-qubit comb blocks for a given gflow,
//!   and the ensembles used by the gflow-discovery, plane-discrimination and
//!   calibration scenarios.
//! * [`bqc`]: the classically-driven blind-computation protocol, its reported
//!   angle distributions, and analytic guessing-probability bounds.
//! * [`entropy`]: conditional min-entropy of classical-quantum combs via
//!   semidefinite and linear programming, dual certificates, and projective
//!   (observational) strategy search.

// Link against the system BLAS that the conic solver expects.
extern crate openblas_src;

pub mod bqc;
pub mod combs;
pub mod entropy;
pub mod gflow;
pub mod mbqc;
pub mod operators;

pub use bqc::{AngleSet, ClientEnsemble, TheoremBounds};
pub use combs::{ClassicalComb, ClassicalQuantumComb, Comb, TimeStepStructure};
pub use gflow::{CorrectionSets, Gflow, OpenGraph, Plane, PlaneChoice};
pub use mbqc::{GraphState, PauliString, PlaneMeasurement};
pub use operators::{LabeledOperator, SpaceLayout, SubsystemLabel, Tolerances};
