//! Frustrated Kuramoto oscillators on general digraphs.
//!
//! The crate is organised around the pipeline used to certify synchronization
//! of
//!
//! ```text
//! dθᵢ/dt = Ωᵢ + K Σ_{j ∈ 𝒩ᵢ} sin(θⱼ − θᵢ + α)
//! ```
//!
//! on a digraph that contains a spanning tree:
//!
//! - [`digraph`]: spanning trees, strongly connected components, maximum nodes
//!   and the layered node decomposition `𝒢₀, …, 𝒢_d`.
//! - [`dynamics`]: the vector field, its second-order lift, RK integrators and
//!   the diameter observables.
//! - [`combo`]: per-layer convex-combination coefficients, the barycentric
//!   extremes and the functionals `Qᵏ`, plus the sine-chain inequality checker.
//! - [`framework`]: explicit sufficient conditions on `(K, α)`, stopping-time
//!   bounds and the runtime monitors that check them along trajectories.
//! - [`harness`]: scenarios, random instances, sweeps and CSV/JSON export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combo;
pub mod digraph;
pub mod dynamics;
pub mod error;
pub mod framework;
pub mod harness;

pub use error::{Error, Result};
