//! Robust output tracking for the boundary-controlled, linearized Boussinesq
//! equations of a ventilated room, coupled with actuator and sensor dynamics.
//!
//! The pipeline runs: mesh → finite elements → steady state → linearization →
//! cascade system → spectral/assumption analysis → internal-model controller
//! synthesis → closed-loop simulation.

pub mod analysis;
pub mod cascade;
pub mod error;
pub mod expr;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod scenario;
pub mod sim;
pub mod sparse;
pub mod steady;
pub mod synthesis;

pub use error::{Error, Result};
