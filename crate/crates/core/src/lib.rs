//! Quantum control landscape analysis.
//!
//! The crate simulates N-level systems driven by a bounded pulse-shaper
//! field, evaluates and differentiates the transfer fidelity J(ε), finds and
//! classifies critical points, checks global (Lie-rank) and local
//! (end-point Jacobian) controllability, reproduces a closed-form
//! two-parameter counterexample landscape with its constrained-slice traps,
//! and runs multi-start trap audits on a complete laboratory specification.

pub mod audit;
pub mod controllability;
pub mod counterexample;
pub mod critpoints;
pub mod document;
pub mod error;
pub mod landscape;
pub mod linalg;
pub mod model;
pub mod propagate;

pub use error::{QclError, Result};
