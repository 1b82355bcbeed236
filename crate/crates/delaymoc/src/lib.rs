//! Delayed-feedback three-box ocean salinity model and the bifurcation
//! analysis tooling around it: a method-of-steps DDE integrator, linear
//! stability via characteristic roots, attractor classification with
//! parameter sweeps, Hopf curve continuation in two parameters, and a
//! scenario-driven CLI for reproducible dataset generation.

pub mod attractor;
pub mod continuation;
pub mod error;
pub mod integrator;
pub mod model;
pub mod params;
pub mod report;
pub mod scenario;
pub mod stability;
