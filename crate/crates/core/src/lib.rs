//! Focusing cubic nonlinear Schrödinger equation on finite graphs.
//!
//! The crate covers the closed-form thermodynamics of the Gibbs measure with
//! a mass cutoff, Metropolis sampling of that measure, split-step time
//! integration, and drivers for the numerical experiments built on them.

pub mod analytic;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod numeric;
pub mod observables;
pub mod quadrature;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{make_torus, AutomorphismGroup, GraphTopology};
pub use observables::{ComplexField, ObservableRecord};
