//! End-to-end simulation scenarios.
//!
//! [`config`] resolves layered run configuration (defaults ← file ←
//! command-line overrides) into a validated [`config::ScenarioConfig`]
//! with a canonical identity hash. [`pipeline`] provides the streaming
//! signal chain — multi-tone envelope synthesis, photodiode transduction,
//! lock-in demodulation — plus zero-signal floor statistics and the
//! noise-density calibration routine. [`runs`] assembles those into the
//! deliverable data products (spectra, IF traces, the weak-field sweep,
//! the isolation study) and writes them as metadata-stamped CSV.

pub mod config;
pub mod pipeline;
pub mod runs;

pub use config::{
    grid, load, parse_config_file, parse_config_text, resolve, Overrides, RawConfig,
    ScenarioConfig, SweepScale, SweepSpec, SweepVariable,
};
pub use pipeline::{
    calibrate_noise_density, derived_seed, simulate_lockin_reading, streams,
    zero_signal_floor, BasebandTone, EnvelopeOscillator, FloorStats, NoiseCalibration,
};
pub use runs::{
    run_if_trace, run_isolation_sweep, run_spectrum, run_weak_field_sweep,
    IsolationCurve, IsolationResult, IsolationRow, RegimeFlag, RunMetadata, SweepRow,
    WeakFieldSweep,
};
