//! Capture into parametric autoresonance of a chirped Duffing oscillator,
//! in quantum, classical and averaged descriptions.

pub mod error;
pub mod ode;
pub mod params;
pub mod quantum;
pub mod classical;
pub mod theory;
pub mod wigner;
pub mod capture;

pub use error::{Error, Result};
pub use params::{DimensionlessParams, OscillatorParams, Regime, TeffConvention};
pub use quantum::{Frame, IntegratorConfig, QuantumState, Trajectory};
