//! Graph Hopfield Networks.
//!
//! Node representations descend a joint energy that couples modern
//! Hopfield retrieval from a learned pattern bank with smoothing over the
//! symmetric normalized graph Laplacian:
//!
//! ```text
//! E(X) = Σ_v [ −lse(β, M x_v) + ½‖x_v‖² ] + λ tr(XᵀLX)
//! ```
//!
//! Gradient descent on `E` gives the damped update
//! `x_v ← (1−α) x_v + α [ Mᵀ softmax(β M x_v) − 2λ (LX)_v ]`.
//!
//! Modules, bottom up:
//!
//! * [`sparse`], [`graph`]: CSR matrices, ingestion, the Laplacian.
//! * [`autodiff`]: the reverse-mode tape every trainable quantity flows through.
//! * [`memory`]: LSE / LSR / hierarchical / multi-head retrieval and the gate.
//! * [`dynamics`]: the energy, its gradient, and the iterated update.
//! * [`theory`]: executable convergence certificates for the base dynamics.
//! * [`model`]: encoder → stacked layers → classifier, Adam, early stopping.
//! * [`experiments`]: corruption, sweeps, phase diagrams, gate analysis.

pub mod autodiff;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod memory;
pub mod model;
pub mod record;
pub mod rng;
pub mod sparse;
pub mod synthetic;
pub mod theory;

pub use error::{Error, ErrorCategory, Result};
pub use graph::{Graph, Split};
pub use sparse::CsrMatrix;
