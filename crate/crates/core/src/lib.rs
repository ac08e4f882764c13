//! Solvers for nonlinear difference systems driven by a discrete singular
//! φ-Laplacian,
//!
//! ```text
//! -Δ[φ(Δu(n-1))] = f(n, u(0), ..., u(T+1))      n = 1..T
//! (φ(Δu(0)), -φ(Δu(T))) ∈ γ(u(0), u(T+1))
//! ```
//!
//! where `φ` maps an open ball `B_a ⊂ ℝᴺ` homeomorphically onto `ℝᴺ` and `γ`
//! is a maximal monotone boundary operator.
//!
//! The building block is the regularized problem `[Q_γ(h)]`
//! (`-Δ[φ(Δu)] + u = h`), which always has exactly one solution. It is solved
//! by strictly convex minimization when `γ = ∂j` ([`convex_core::solve_q_subdiff`])
//! and by a proximal-point iteration on `γ + θ` when `γ` is a linear map
//! ([`convex_core::solve_q_general`]). On top of it sit a Picard/homotopy
//! solver for general right-hand sides ([`nonpotential`]), energy
//! minimization and saddle-point search for gradient systems ([`variational`]),
//! and a set of oracles and a priori estimate checks ([`verify`]).
//!
//! Every solver returns its candidate together with residual certificates;
//! a result is only reported as converged when both the difference equation
//! and the boundary inclusion hold to the requested tolerance.

// `!(x < y)` is used on purpose so that NaN lands in the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anderson;
pub mod boundary_laws;
pub mod cli;
pub mod convex_core;
mod energy;
pub mod error;
pub mod grid;
pub mod nonpotential;
mod optim;
pub mod phi_maps;
pub mod variational;
mod vecops;
pub mod verify;

pub use boundary_laws::{BoundaryLaw, BoundaryPotential, ConvexSet, LawDescriptor};
pub use convex_core::{SolveOptions, SolveReport};
pub use error::{Error, Result};
pub use grid::{BoundaryPair, GridFunction, InteriorFunction};
pub use phi_maps::PhiMap;
