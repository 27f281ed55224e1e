//! Simulation of a Rydberg-atom RF mixer detection chain for weak fields.
//!
//! Two RF tones (a strong local oscillator and a weak signal) superpose at a
//! cesium vapor cell. The atoms respond to the slowly varying field envelope,
//! which modulates the probe-laser transmission through the EIT/Autler-Townes
//! lineshape; a photodiode converts transmission to volts, and a dual-phase
//! lock-in amplifier recovers the intermediate-frequency beat. Around that
//! signal chain sit antenna link-budget arithmetic (how much field reaches
//! the cell for a given generator power) and cell-factor calibration (tying
//! free-space field predictions to in-cell measurements via AT splitting).
//!
//! Modules follow the chain:
//!
//! - [`atoms`] — closed-form atomic relations: AT splitting, the minimum
//!   AT-resolvable field, Rabi frequencies.
//! - [`fields`] — two-tone superposition: exact envelope, weak-field
//!   approximation, IF trace synthesis.
//! - [`transducer`] — EIT/AT lineshape, transmission, photodiode voltage
//!   with seeded additive noise.
//! - [`lockin`] — digital dual-phase lock-in: quadrature mixing, cascaded
//!   one-pole low-pass stages, R/θ readout, rejection analysis.
//! - [`linkbudget`] — dBm/watt conversions, far-field distance, free-space
//!   field from radiated power, attenuation chains, cell factor.
//! - [`calibration`] — field-from-splitting inversion, cell-factor fit,
//!   uncertainty combination.
//! - [`scenarios`] — experiment orchestration: config parsing, deterministic
//!   seeding, sweep execution, CSV emission.
//!
//! Everything is deterministic for a fixed seed: noise streams are
//! counter-seeded per trace, sweep points derive their seeds from the run
//! seed and point index, and output files are byte-identical across runs in
//! reproducible mode.

pub mod atoms;
pub mod calibration;
pub mod fields;
pub mod linkbudget;
pub mod lockin;
pub mod scenarios;
pub mod transducer;

use thiserror::Error;

/// Unified error type for the simulation chain.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical-domain precondition was violated (negative field,
    /// amplitude ordering, nonpositive power, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing, malformed, unknown, or out of
    /// range. Messages carry the offending key and, for files, the line.
    #[error("config error: {0}")]
    Config(String),

    /// Input carries the wrong unit tag for the operation.
    #[error("unit mismatch: expected {expected}, got {got}")]
    UnitMismatch {
        expected: &'static str,
        got: &'static str,
    },

    /// Not enough data points for the requested fit or statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical procedure failed to converge or produced non-finite
    /// values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File or stream I/O failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
