//! Simulation and optimization of variational Ramsey interferometers on
//! collective spins.

pub mod circuit;
pub mod error;
pub mod lab;
pub mod metrology;
pub mod oqi;
pub mod spin;
pub mod stability;
pub mod varopt;

pub use circuit::{CircuitForm, CircuitParams, LayerAngles, OutcomeTable, PreparedCircuit};
pub use error::{Error, Result};
pub use metrology::{CostReport, Estimator, Prior};
pub use spin::{Axis, DickeVector};
