//! Field-to-voltage transduction: EIT/AT lineshape, probe transmission, and
//! the photodiode front end.
//!
//! The vapor cell is modeled phenomenologically: the EIT feature is a pair of
//! unit-height Lorentzians of FWHM Γ_EIT whose separation is the
//! Autler-Townes splitting of the instantaneous RF envelope,
//!
//! ```text
//! S(δ) = background + contrast/2 · [ L(δ − Δf_AT/2) + L(δ + Δf_AT/2) ]
//! L(x) = 1 / (1 + (2x/Γ_EIT)²)
//! ```
//!
//! With the probe and coupling lasers pinned on resonance (δ = 0) this
//! collapses to the closed form
//!
//! ```text
//! T(E) = background + contrast / (1 + (E/E_AT)²)
//! ```
//!
//! which is the entire transduction nonlinearity: monotone in E, linear for
//! small modulations around a bias point E_LO, and rolling off once the AT
//! splitting pushes the doublet out from under the laser. The photodiode adds
//! gain, offset, and seeded white Gaussian noise.

use crate::atoms::{at_splitting, min_detectable_at_field, RydbergTransition};
use crate::fields::{TimeSeries, UnitTag};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Phenomenological EIT/AT lineshape parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EitModel {
    pub transition: RydbergTransition,
    /// EIT peak height above background, normalized transmission, in (0, 1].
    pub contrast: f64,
    /// Off-resonance probe transmission, in [0, 1).
    pub background_transmission: f64,
}

impl EitModel {
    /// Validates contrast ∈ (0,1], background ∈ [0,1), and
    /// background + contrast ≤ 1 (transmission cannot exceed unity).
    pub fn new(
        transition: RydbergTransition,
        contrast: f64,
        background_transmission: f64,
    ) -> Result<Self> {
        if !(contrast > 0.0 && contrast <= 1.0) {
            return Err(Error::Domain(format!("contrast must be in (0,1], got {contrast}")));
        }
        if !(background_transmission >= 0.0 && background_transmission < 1.0) {
            return Err(Error::Domain(format!(
                "background transmission must be in [0,1), got {background_transmission}"
            )));
        }
        if background_transmission + contrast > 1.0 {
            return Err(Error::Domain(format!(
                "background + contrast = {} exceeds full transmission",
                background_transmission + contrast
            )));
        }
        Ok(Self { transition, contrast, background_transmission })
    }

    /// Field at which the AT splitting equals the EIT linewidth, V/m.
    pub fn resolvable_field(&self) -> f64 {
        min_detectable_at_field(&self.transition)
    }
}

impl Default for EitModel {
    /// Cesium transition with contrast 0.5 over a 0.3 background. The
    /// absolute scale is arbitrary; every downstream result is a ratio or a
    /// calibrated slope.
    fn default() -> Self {
        Self {
            transition: RydbergTransition::default(),
            contrast: 0.5,
            background_transmission: 0.3,
        }
    }
}

/// Default photodiode noise density, V/√Hz.
///
/// Produced by the scripted calibration (`calibrate-noise`, 128 floor
/// averages, default lock-in scale τ = 3 s): the density at which the
/// zero-signal lock-in floor equals the reading produced by a 46 µV/m cell
/// field. The floor mean is sample-rate independent, so the value holds at
/// any valid `sim.sample_rate_hz`.
pub const DEFAULT_NOISE_DENSITY_V_PER_SQRT_HZ: f64 = 5.88e-5;

/// Photodiode and front-end electronics: transmission in, volts out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotodiodeModel {
    /// Output volts per unit transmission. Strictly positive.
    pub responsivity_gain_v: f64,
    /// Output offset at zero transmission, V.
    pub dark_voltage_v: f64,
    /// White noise amplitude density at the output, V/√Hz. Nonnegative.
    pub noise_density_v_per_sqrt_hz: f64,
    /// Seed for the noise stream; equal seeds reproduce samples exactly.
    pub rng_seed: u64,
}

impl PhotodiodeModel {
    pub fn new(
        responsivity_gain_v: f64,
        dark_voltage_v: f64,
        noise_density_v_per_sqrt_hz: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(responsivity_gain_v > 0.0) {
            return Err(Error::Domain(format!(
                "responsivity gain must be positive, got {responsivity_gain_v} V"
            )));
        }
        if !(noise_density_v_per_sqrt_hz >= 0.0) {
            return Err(Error::Domain(format!(
                "noise density must be nonnegative, got {noise_density_v_per_sqrt_hz} V/rtHz"
            )));
        }
        Ok(Self {
            responsivity_gain_v,
            dark_voltage_v,
            noise_density_v_per_sqrt_hz,
            rng_seed,
        })
    }

    /// Same model with the noise turned off; used for analytic cross-checks.
    pub fn noiseless(mut self) -> Self {
        self.noise_density_v_per_sqrt_hz = 0.0;
        self
    }
}

impl Default for PhotodiodeModel {
    fn default() -> Self {
        Self {
            responsivity_gain_v: 1.0,
            dark_voltage_v: 0.0,
            noise_density_v_per_sqrt_hz: DEFAULT_NOISE_DENSITY_V_PER_SQRT_HZ,
            rng_seed: 0,
        }
    }
}

/// Unit-height Lorentzian of FWHM `gamma` evaluated at offset `x`.
fn lorentzian(x: f64, gamma: f64) -> f64 {
    let u = 2.0 * x / gamma;
    1.0 / (1.0 + u * u)
}

/// Probe transmission versus coupling-laser detuning for a static field
/// `e_field_vpm`: the AT doublet lineshape. At E = 0 the two Lorentzians
/// coincide into the single EIT peak.
pub fn eit_spectrum(m: &EitModel, coupling_detuning_hz: f64, e_field_vpm: f64) -> f64 {
    assert!(e_field_vpm >= 0.0, "field amplitude must be nonnegative, got {e_field_vpm} V/m");
    let gamma = m.transition.eit_linewidth_hz;
    let half_split = at_splitting(e_field_vpm, &m.transition)
        .expect("nonnegative field was checked above") / 2.0;
    m.background_transmission
        + m.contrast / 2.0
            * (lorentzian(coupling_detuning_hz - half_split, gamma)
                + lorentzian(coupling_detuning_hz + half_split, gamma))
}

/// On-resonance transmission in closed form:
/// background + contrast/(1 + (E/E_AT)²). Strictly decreasing in E; equals
/// `eit_spectrum(m, 0, E)` identically.
pub fn transmission_at_resonance(m: &EitModel, e_field_vpm: f64) -> f64 {
    assert!(e_field_vpm >= 0.0, "field amplitude must be nonnegative, got {e_field_vpm} V/m");
    let x = e_field_vpm / m.resolvable_field();
    m.background_transmission + m.contrast / (1.0 + x * x)
}

/// Small-signal transduction slope |dT/dE| at bias field `e_lo_vpm`, in
/// transmission per V/m:
///
/// ```text
/// g(E_LO) = contrast · (2·E_LO/E_AT²) / (1 + (E_LO/E_AT)²)²
/// ```
///
/// The photodiode IF amplitude for a weak modulation E_Sig·cos(Δω·t) riding
/// on E_LO is `responsivity_gain · g(E_LO) · E_Sig`. The slope peaks at
/// E_LO = E_AT/√3 and rolls off as AT splitting takes over.
pub fn small_signal_if_gain(m: &EitModel, e_lo_vpm: f64) -> f64 {
    assert!(e_lo_vpm >= 0.0, "bias field must be nonnegative, got {e_lo_vpm} V/m");
    let e_at = m.resolvable_field();
    let x = e_lo_vpm / e_at;
    let denom = 1.0 + x * x;
    m.contrast * (2.0 * e_lo_vpm / (e_at * e_at)) / (denom * denom)
}

/// Streaming envelope-to-voltage converter: one output sample per input
/// field sample, with the seeded noise stream advanced in lockstep.
///
/// This is the constant-memory primitive behind [`photodiode_trace`]; long
/// simulations feed it sample by sample instead of materializing traces.
pub struct PhotodiodeSampler {
    eit: EitModel,
    pd: PhotodiodeModel,
    sigma_v: f64,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl PhotodiodeSampler {
    /// `sample_rate_hz` sets the noise bandwidth: white density over the
    /// Nyquist band gives per-sample standard deviation
    /// noise_density·√(sample_rate/2).
    pub fn new(eit: &EitModel, pd: &PhotodiodeModel, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!(
                "sample rate must be positive, got {sample_rate_hz} Hz"
            )));
        }
        let sigma_v = pd.noise_density_v_per_sqrt_hz * (sample_rate_hz / 2.0).sqrt();
        Ok(Self {
            eit: eit.clone(),
            pd: *pd,
            sigma_v,
            rng: ChaCha8Rng::seed_from_u64(pd.rng_seed),
            normal: Normal::new(0.0, 1.0).expect("unit normal is well-formed"),
        })
    }

    /// Per-sample noise standard deviation, V.
    pub fn noise_sigma_v(&self) -> f64 {
        self.sigma_v
    }

    /// Converts one envelope sample (V/m) to one photodiode sample (V).
    pub fn next_sample(&mut self, e_field_vpm: f64) -> f64 {
        let clean = self.pd.dark_voltage_v
            + self.pd.responsivity_gain_v * transmission_at_resonance(&self.eit, e_field_vpm);
        if self.sigma_v > 0.0 {
            clean + self.sigma_v * self.normal.sample(&mut self.rng)
        } else {
            clean
        }
    }
}

/// Converts an envelope trace (V/m) to a photodiode voltage trace (V):
/// v(t) = dark + gain·T(E(t)) + n(t), n white Gaussian with standard
/// deviation noise_density·√(sample_rate/2), reproducible from `pd.rng_seed`.
pub fn photodiode_trace(
    m: &EitModel,
    pd: &PhotodiodeModel,
    envelope: &TimeSeries,
) -> Result<TimeSeries> {
    if envelope.unit_tag != UnitTag::VoltsPerMeter {
        return Err(Error::UnitMismatch {
            expected: UnitTag::VoltsPerMeter.as_str(),
            got: envelope.unit_tag.as_str(),
        });
    }
    let mut sampler = PhotodiodeSampler::new(m, pd, envelope.sample_rate_hz)?;
    let samples = envelope.samples.iter().map(|&e| sampler.next_sample(e)).collect();
    TimeSeries::new(envelope.sample_rate_hz, envelope.start_time_s, samples, UnitTag::Volts)
}
