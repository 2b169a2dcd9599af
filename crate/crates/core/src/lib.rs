//! Numerical laboratory for concavity properties of positive solutions of
//! `-Δ_p u = f(u)` with zero Dirichlet data on convex domains.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: convex domains, meshes, P1 fields.
//! * [`reaction`]: reaction terms `f` with primitive `F` and checks of the
//!   structural hypotheses that make a transformed solution concave.
//! * [`transform`]: the concavifying map `φ(t) = ∫₁ᵗ F^{-1/p}` and its inverse.
//! * [`solver`]: energy minimisation for the Dirichlet problem, the
//!   regularised family, and the first eigenvalue.
//! * [`concavity`]: sampled convexity-function scans and superlevel-set tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concavity;
pub mod geometry;
pub mod optim;
pub mod quadrature;
pub mod reaction;
pub mod solver;
pub mod sparse;
pub mod transform;

/// A point in the plane. One-dimensional meshes use `y = 0`.
pub type Point = [f64; 2];

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use concavity::{ConcavityReport, ConcavityVerdict, QuasiConcavityReport};
pub use geometry::{ConvexDomain, Mesh, ScalarField};
pub use reaction::{HypothesisReport, ReactionTerm, Verdict};
pub use solver::{SolveResult, SolverConfig};
pub use transform::TransformSpec;
