//! Synthesis of parameter-dependent robust control invariant (PD-RCI)
//! polytopes and gain-scheduled state-feedback laws for polytopic LPV
//! systems, via iterated semidefinite programming.
//!
//! The pipeline has two stages. Stage one fixes the face matrix of the
//! set and grows `|det W|` through a sequence of determinant-increase
//! SDPs. Stage two fixes `W`, lets the face matrices depend on the
//! scheduling parameter, and maximizes a Monte-Carlo volume surrogate
//! over a simplex grid. Both stages rely on simplex-relaxed matrix
//! inequality families assembled in [`lmi`] and solved through the
//! conic backend in [`conic`].
//!
//! See the `examples/` directory for runnable entry points and the
//! `pdrci` binary for the file-based pipeline.

pub mod conic;
pub mod geometry;
pub mod lmi;
pub mod model;
pub mod polya;
pub mod synthesis;
pub mod verify;

pub mod cli;
