//! First-order methods for L-smooth convex minimization with dynamic,
//! certificate-backed convergence rates.
//!
//! The crate provides:
//!
//! - gradient descent and the optimized gradient method (OGM),
//! - the subgame perfect gradient method (SPGM) and its limited-memory
//!   variant, which tighten their convergence certificate at runtime by
//!   solving a small convex subproblem over the observed oracle history,
//! - an adversarial instance generator that extends any SPGM history into a
//!   worst-case smooth convex function saturating the certified rate,
//! - a query/response game harness for pitting methods against oracles,
//! - synthetic problem families, LIBSVM ingestion, and reference optima.

pub mod first_order;
pub mod game;
pub mod hardgen;
pub mod linalg;
pub mod methods;
pub mod problems;
pub mod subqp;
