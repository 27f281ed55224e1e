//! Closed-form atomic-physics relations for Rydberg electrometry.
//!
//! A strong RF field resonant with a Rydberg-Rydberg transition splits the
//! EIT peak into an Autler-Townes doublet whose separation is linear in the
//! field amplitude:
//!
//! ```text
//! Δf_AT = (λ_c / λ_p) · E · ℘ / (2πħ)
//! ```
//!
//! where λ_p, λ_c are the probe and coupling laser wavelengths and ℘ is the
//! RF transition dipole moment. Inverting at the point where the splitting
//! equals the EIT linewidth Γ_EIT gives the smallest field measurable by
//! splitting alone:
//!
//! ```text
//! E_AT = (λ_p / λ_c) · 2πħ · Γ_EIT / ℘
//! ```
//!
//! Fields below E_AT are the domain of the mixer detection scheme modeled by
//! the rest of this crate; these relations calibrate it from above.

use crate::{Error, Result};

/// Reduced Planck constant, J·s (CODATA).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge, C (CODATA, exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Bohr radius, m.
///
/// The truncated digit string 0.529177 Å is used deliberately so that dipole
/// moments quoted in e·a₀ reproduce bit-identically in examples and tests.
pub const BOHR_RADIUS: f64 = 0.529_177e-10;

/// One atomic sensing configuration: the laser pair addressing a Rydberg
/// state and the RF-coupled partner state.
///
/// This is a plain value object — alternate transitions are supplied by the
/// caller, not looked up from an atomic-structure database.
#[derive(Debug, Clone, PartialEq)]
pub struct RydbergTransition {
    /// Probe laser wavelength λ_p, m.
    pub probe_wavelength_m: f64,
    /// Coupling laser wavelength λ_c, m.
    pub coupling_wavelength_m: f64,
    /// Radial part of the RF transition dipole matrix element, in e·a₀.
    pub dipole_radial: f64,
    /// Angular factor of the dipole matrix element, dimensionless.
    pub dipole_angular: f64,
    /// EIT linewidth Γ_EIT (FWHM), Hz.
    pub eit_linewidth_hz: f64,
    /// RF frequency resonant with the Rydberg-Rydberg transition, Hz.
    pub rf_resonance_hz: f64,
}

impl RydbergTransition {
    /// Validates and builds a transition.
    ///
    /// Wavelengths, linewidth, and resonance must be strictly positive and
    /// the dipole product must be positive (a sign flip on both parts is
    /// allowed; a zero or antisymmetric dipole is not a usable transition).
    pub fn new(
        probe_wavelength_m: f64,
        coupling_wavelength_m: f64,
        dipole_radial: f64,
        dipole_angular: f64,
        eit_linewidth_hz: f64,
        rf_resonance_hz: f64,
    ) -> Result<Self> {
        if !(probe_wavelength_m > 0.0) || !(coupling_wavelength_m > 0.0) {
            return Err(Error::Domain(format!(
                "wavelengths must be positive, got probe {probe_wavelength_m} m, \
                 coupling {coupling_wavelength_m} m"
            )));
        }
        if !(eit_linewidth_hz > 0.0) {
            return Err(Error::Domain(format!(
                "EIT linewidth must be positive, got {eit_linewidth_hz} Hz"
            )));
        }
        if !(rf_resonance_hz > 0.0) {
            return Err(Error::Domain(format!(
                "RF resonance must be positive, got {rf_resonance_hz} Hz"
            )));
        }
        if !(dipole_radial * dipole_angular > 0.0) {
            return Err(Error::Domain(format!(
                "dipole radial x angular must be positive, got \
                 {dipole_radial} x {dipole_angular}"
            )));
        }
        Ok(Self {
            probe_wavelength_m,
            coupling_wavelength_m,
            dipole_radial,
            dipole_angular,
            eit_linewidth_hz,
            rf_resonance_hz,
        })
    }

    /// The cesium 34D₅/₂ → 35P₃/₂ sensing configuration: 852 nm probe,
    /// 511.148 nm coupling, RF resonance 19.626 GHz, dipole
    /// 1476.6048 × 0.48989 e·a₀ ≈ 723.3739 e·a₀, Γ_EIT = 4 MHz.
    pub fn cesium_34d_35p() -> Self {
        Self {
            probe_wavelength_m: 852e-9,
            coupling_wavelength_m: 511.148e-9,
            dipole_radial: 1476.6048,
            dipole_angular: 0.48989,
            eit_linewidth_hz: 4.0e6,
            rf_resonance_hz: 19.626e9,
        }
    }
}

impl Default for RydbergTransition {
    fn default() -> Self {
        Self::cesium_34d_35p()
    }
}

/// RF transition dipole moment in SI units: radial × angular × e × a₀, C·m.
pub fn dipole_moment_si(t: &RydbergTransition) -> f64 {
    t.dipole_radial * t.dipole_angular * ELEMENTARY_CHARGE * BOHR_RADIUS
}

/// Autler-Townes splitting Δf_AT = (λ_c/λ_p)·E·℘/(2πħ), in Hz (cyclic).
///
/// Linear in the field; errors on negative field amplitudes.
pub fn at_splitting(e_field_vpm: f64, t: &RydbergTransition) -> Result<f64> {
    if e_field_vpm < 0.0 {
        return Err(Error::Domain(format!(
            "field amplitude must be nonnegative, got {e_field_vpm} V/m"
        )));
    }
    let wavelength_ratio = t.coupling_wavelength_m / t.probe_wavelength_m;
    Ok(wavelength_ratio * e_field_vpm * dipole_moment_si(t) / (2.0 * std::f64::consts::PI * HBAR))
}

/// Smallest field resolvable by AT splitting: the amplitude whose doublet
/// separation equals the EIT linewidth, E_AT = (λ_p/λ_c)·2πħ·Γ_EIT/℘, V/m.
///
/// Exact algebraic inverse of [`at_splitting`] evaluated at Γ_EIT.
pub fn min_detectable_at_field(t: &RydbergTransition) -> f64 {
    let wavelength_ratio = t.probe_wavelength_m / t.coupling_wavelength_m;
    wavelength_ratio * 2.0 * std::f64::consts::PI * HBAR * t.eit_linewidth_hz
        / dipole_moment_si(t)
}

/// On-resonance Rabi frequency Ω₀ = ℘E/ħ, in rad/s (angular).
///
/// Note the unit split across this module: AT splitting is cyclic (Hz,
/// the 2π lives inside the formula), Rabi frequencies are angular.
pub fn rabi_frequency(e_field_vpm: f64, t: &RydbergTransition) -> f64 {
    dipole_moment_si(t) * e_field_vpm / HBAR
}

/// Generalized Rabi frequency Ω′ = √(Ω₀² + δ²) for an RF field detuned by
/// δ (rad/s) from the transition; symmetric in the sign of δ.
///
/// This is why EIT spectra alone discriminate RF frequencies poorly: an
/// off-resonant field still splits the line through Ω′ over a huge detuning
/// continuum, which the mixer's IF selectivity sidesteps.
pub fn generalized_rabi(omega0_rad_s: f64, detuning_rad_s: f64) -> f64 {
    omega0_rad_s.hypot(detuning_rad_s)
}
