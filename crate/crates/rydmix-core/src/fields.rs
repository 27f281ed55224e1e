//! Two-tone RF superposition: exact envelope, weak-field approximation, and
//! sampled IF traces.
//!
//! A strong local-oscillator tone E_LO·cos(ω_LO·t+φ_LO) and a weak signal
//! tone E_Sig·cos(ω_Sig·t+φ_Sig) add at the vapor cell. For small relative
//! detuning (|Δω|/ω̄ ≪ 1) the sum is a carrier at the mean frequency times a
//! slowly varying envelope
//!
//! ```text
//! |E|(t) = √(E_LO² + E_Sig² + 2·E_LO·E_Sig·cos(Δω·t + Δφ))
//!        ≈ E_LO + E_Sig·cos(Δω·t + Δφ)        (E_Sig ≪ E_LO)
//! ```
//!
//! The atoms respond to the envelope, not the carrier, so nothing here ever
//! samples at the ~19.6 GHz carrier rate: traces are sampled at a rate set by
//! the beat (IF) frequency Δω/2π alone. The weak-field form is the mixer's
//! down-conversion: the incident-field information rides on a cosine at f_IF.

use crate::{Error, Result};
use std::f64::consts::PI;
use std::io::Write;

/// Wrap a phase onto [−π, π).
fn wrap_phase(phase_rad: f64) -> f64 {
    (phase_rad + PI).rem_euclid(2.0 * PI) - PI
}

/// One continuous-wave RF tone: amplitude (V/m), frequency (Hz), phase (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneField {
    /// Field amplitude, V/m. Nonnegative.
    pub amplitude_vpm: f64,
    /// Carrier frequency, Hz. Strictly positive.
    pub frequency_hz: f64,
    /// Carrier phase, rad, normalized to [−π, π).
    pub phase_rad: f64,
}

impl ToneField {
    /// Validates amplitude ≥ 0 and frequency > 0; normalizes phase to
    /// [−π, π).
    pub fn new(amplitude_vpm: f64, frequency_hz: f64, phase_rad: f64) -> Result<Self> {
        if !(amplitude_vpm >= 0.0) {
            return Err(Error::Domain(format!(
                "tone amplitude must be nonnegative, got {amplitude_vpm} V/m"
            )));
        }
        if !(frequency_hz > 0.0) {
            return Err(Error::Domain(format!(
                "tone frequency must be positive, got {frequency_hz} Hz"
            )));
        }
        if !phase_rad.is_finite() {
            return Err(Error::Domain(format!("tone phase must be finite, got {phase_rad}")));
        }
        Ok(Self { amplitude_vpm, frequency_hz, phase_rad: wrap_phase(phase_rad) })
    }

    /// Tone with the default phase of zero.
    pub fn cw(amplitude_vpm: f64, frequency_hz: f64) -> Result<Self> {
        Self::new(amplitude_vpm, frequency_hz, 0.0)
    }
}

/// The LO + signal tone pair incident on the cell.
///
/// Detuning, phase difference, and mean frequency are derived on demand so
/// they can never go stale against the stored tones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TonePair {
    pub lo: ToneField,
    pub sig: ToneField,
}

impl TonePair {
    pub fn new(lo: ToneField, sig: ToneField) -> Self {
        Self { lo, sig }
    }

    /// Signed detuning Δω = ω_LO − ω_Sig, rad/s.
    pub fn delta_omega(&self) -> f64 {
        2.0 * PI * (self.lo.frequency_hz - self.sig.frequency_hz)
    }

    /// Phase difference Δφ = φ_LO − φ_Sig, rad, wrapped to [−π, π).
    pub fn delta_phi(&self) -> f64 {
        wrap_phase(self.lo.phase_rad - self.sig.phase_rad)
    }

    /// Mean angular frequency ω̄, rad/s.
    pub fn mean_omega(&self) -> f64 {
        PI * (self.lo.frequency_hz + self.sig.frequency_hz)
    }

    /// Beat (intermediate) frequency f_IF = |Δω|/2π, Hz.
    pub fn if_frequency_hz(&self) -> f64 {
        (self.lo.frequency_hz - self.sig.frequency_hz).abs()
    }

    /// Narrowband figure |Δω|/ω̄. The envelope description assumes this is
    /// small; typical operation sits near 4.6×10⁻⁶.
    pub fn relative_detuning(&self) -> f64 {
        (self.delta_omega() / self.mean_omega()).abs()
    }

    /// Advisory check of the narrowband assumption. Returns a message when
    /// |Δω|/ω̄ ≥ 10⁻³; never an error, since the envelope formula degrades
    /// gradually rather than failing at a threshold.
    pub fn narrowband_warning(&self) -> Option<String> {
        let r = self.relative_detuning();
        if r >= 1e-3 {
            Some(format!(
                "relative detuning |dw|/w_mean = {r:.3e} exceeds 1e-3; \
                 the slow-envelope description is marginal here"
            ))
        } else {
            None
        }
    }
}

/// Sampling unit carried by a [`TimeSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitTag {
    VoltsPerMeter,
    Volts,
    Dimensionless,
}

impl UnitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitTag::VoltsPerMeter => "volts_per_meter",
            UnitTag::Volts => "volts",
            UnitTag::Dimensionless => "dimensionless",
        }
    }
}

/// A uniformly sampled real-valued trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// Sample rate, Hz. Strictly positive.
    pub sample_rate_hz: f64,
    /// Time of the first sample, s.
    pub start_time_s: f64,
    pub samples: Vec<f64>,
    pub unit_tag: UnitTag,
}

impl TimeSeries {
    pub fn new(
        sample_rate_hz: f64,
        start_time_s: f64,
        samples: Vec<f64>,
        unit_tag: UnitTag,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!(
                "sample rate must be positive, got {sample_rate_hz} Hz"
            )));
        }
        Ok(Self { sample_rate_hz, start_time_s, samples, unit_tag })
    }

    /// Time of sample `k`, s.
    pub fn time_at(&self, k: usize) -> f64 {
        self.start_time_s + k as f64 / self.sample_rate_hz
    }

    /// Arithmetic mean of the samples. Errors on an empty series.
    pub fn mean(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::InsufficientData("mean of an empty time series".into()));
        }
        Ok(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }

    /// Writes `time_s,value` CSV. A `#` comment line carries the sample rate
    /// and unit; callers may prepend further comment lines via `comments`.
    /// Numbers are written in shortest round-trip form, so output is
    /// byte-deterministic for identical inputs.
    pub fn write_csv<W: Write>(&self, out: &mut W, comments: &[String]) -> Result<()> {
        self.write_csv_named(out, comments, "value")
    }

    /// Same as [`write_csv`](Self::write_csv) but with a caller-chosen name
    /// for the value column, e.g. `volts` for photodiode traces.
    pub fn write_csv_named<W: Write>(
        &self,
        out: &mut W,
        comments: &[String],
        value_label: &str,
    ) -> Result<()> {
        for line in comments {
            writeln!(out, "# {line}")?;
        }
        writeln!(
            out,
            "# sample_rate_hz = {}, unit = {}",
            self.sample_rate_hz,
            self.unit_tag.as_str()
        )?;
        writeln!(out, "time_s,{value_label}")?;
        for (k, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", self.time_at(k), v)?;
        }
        Ok(())
    }
}

/// Exact envelope of the two-tone sum at time `t`:
/// √(E_LO² + E_Sig² + 2·E_LO·E_Sig·cos(Δω·t + Δφ)).
///
/// Periodic in `t` with period 2π/|Δω|; bounded by |E_LO−E_Sig| below and
/// E_LO+E_Sig above.
pub fn envelope_exact(p: &TonePair, t: f64) -> f64 {
    let e_lo = p.lo.amplitude_vpm;
    let e_sig = p.sig.amplitude_vpm;
    let beat = (p.delta_omega() * t + p.delta_phi()).cos();
    // Rounding can push the radicand a few ulp below zero at deep
    // destructive interference with E_LO = E_Sig.
    (e_lo * e_lo + e_sig * e_sig + 2.0 * e_lo * e_sig * beat).max(0.0).sqrt()
}

/// Weak-field envelope E_LO + E_Sig·cos(Δω·t + Δφ), valid for E_Sig < E_LO.
///
/// Always a lower bound on [`envelope_exact`], with worst-case error
/// E_Sig²/(2·(E_LO−E_Sig)) over all t.
pub fn envelope_weak(p: &TonePair, t: f64) -> Result<f64> {
    let e_lo = p.lo.amplitude_vpm;
    let e_sig = p.sig.amplitude_vpm;
    if e_sig >= e_lo {
        return Err(Error::Domain(format!(
            "weak-field envelope requires E_Sig < E_LO, got E_Sig = {e_sig} V/m \
             >= E_LO = {e_lo} V/m"
        )));
    }
    Ok(e_lo + e_sig * (p.delta_omega() * t + p.delta_phi()).cos())
}

/// The down-converted (IF) field sample: the weak-field envelope, returned
/// together with the IF frequency it oscillates at.
///
/// Returns `(field V/m, f_IF Hz)`. Same domain requirement as
/// [`envelope_weak`]: the signal tone must be the weaker one.
pub fn if_signal(p: &TonePair, t: f64) -> Result<(f64, f64)> {
    Ok((envelope_weak(p, t)?, p.if_frequency_hz()))
}

/// Samples the envelope at `sample_rate` for `duration` seconds starting at
/// t = 0. `exact` selects the exact form over the weak-field form.
///
/// The sample rate must be at least 10·f_IF so the beat is honestly
/// rendered; undersampling is a configuration error naming the minimum.
/// Covers [0, duration) with ⌈duration·rate⌉ samples.
pub fn synthesize_envelope_trace(
    p: &TonePair,
    sample_rate_hz: f64,
    duration_s: f64,
    exact: bool,
) -> Result<TimeSeries> {
    if !(duration_s > 0.0) {
        return Err(Error::Config(format!("trace duration must be positive, got {duration_s} s")));
    }
    let min_rate = 10.0 * p.if_frequency_hz();
    if !(sample_rate_hz > 0.0) || sample_rate_hz < min_rate {
        return Err(Error::Config(format!(
            "sample rate {sample_rate_hz} Hz undersamples the {} Hz beat; \
             at least {min_rate} Hz required",
            p.if_frequency_hz()
        )));
    }
    let n = (duration_s * sample_rate_hz).ceil() as usize;
    let mut samples = Vec::with_capacity(n);
    if exact {
        for k in 0..n {
            samples.push(envelope_exact(p, k as f64 / sample_rate_hz));
        }
    } else {
        // Hoist the domain check out of the loop; the formula itself is then
        // infallible.
        envelope_weak(p, 0.0)?;
        let e_lo = p.lo.amplitude_vpm;
        let e_sig = p.sig.amplitude_vpm;
        let dw = p.delta_omega();
        let dphi = p.delta_phi();
        for k in 0..n {
            samples.push(e_lo + e_sig * (dw * k as f64 / sample_rate_hz + dphi).cos());
        }
    }
    TimeSeries::new(sample_rate_hz, 0.0, samples, UnitTag::VoltsPerMeter)
}
