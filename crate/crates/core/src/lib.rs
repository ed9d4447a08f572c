//! Quantum-noise simulation and closed-form model of a Bell-Bloom
//! magnetometer read out with (optionally squeezed) light.
//!
//! The pipeline is: [`sde`] integrates the stochastic Bloch equation,
//! [`probe`] turns F_z into a polarimeter signal with shot noise, [`dsp`]
//! demodulates and estimates spectra, and [`experiments`] strings these
//! together into calibration, responsivity and sensitivity runs. [`analytic`]
//! holds the first-order closed-form predictions the simulations are checked
//! against.

pub mod analytic;
pub mod config;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod model;
pub mod probe;
pub mod pump;
pub mod report;
pub mod sde;

pub use error::{Error, Result};
pub use model::{EnsembleConfig, FieldProgram, ProbeConfig, Spectrum};
pub use pump::PumpProgram;
pub use sde::{NoiseSwitches, SimPlan, SpinSystem, SpinTrajectory};
