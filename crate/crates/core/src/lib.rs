//! Spectral Galerkin solver for a thin liquid film carrying an insoluble
//! surfactant on the periodic interval `[-π, π]`, with a computable
//! certificate for global existence and exponential decay near the flat
//! state.

pub mod spectral;
pub mod model;
pub mod oracle;
pub mod certificate;
pub mod integrator;
pub mod diagnostics;
