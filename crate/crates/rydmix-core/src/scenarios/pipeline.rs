//! The streaming simulation pipeline shared by all sweep scenarios:
//! a baseband multi-tone envelope oscillator feeds the EIT transducer
//! sample by sample, and the lock-in accumulator folds the photodiode
//! voltage into quadrature sums on the fly. No full-length trace is ever
//! materialized — a 30 s point at 2 MHz streams through constant memory.
//!
//! The carrier never appears: with every tone referenced to the local
//! oscillator, the field magnitude at the atoms is
//! |E_LO + Σᵢ Eᵢ·exp(j(Δωᵢt + Δφᵢ))|, the exact envelope of the RF sum.
//! Interferers are never linearized, so mixer compression at large
//! interferer amplitudes emerges from the model instead of being assumed
//! away.

use rayon::prelude::*;

use crate::lockin::{LockInAccumulator, LockInConfig, LockInOutput};
use crate::scenarios::config::ScenarioConfig;
use crate::transducer::{EitModel, PhotodiodeModel, PhotodiodeSampler};
use crate::{Error, Result};

/// Seed-stream tags, kept apart so no two purposes ever draw the same
/// noise. Combined as `seed XOR (stream << 48) XOR index`.
pub mod streams {
    /// Weak-field sweep points, indexed by sweep position.
    pub const SWEEP_POINT: u64 = 1;
    /// Zero-signal floor repetitions attached to a sweep.
    pub const FLOOR: u64 = 2;
    /// The in-tune-only baseline reading of the isolation study.
    pub const ISO_BASELINE: u64 = 3;
    /// Interferer-only isolation readings.
    pub const ISO_LEAK: u64 = 4;
    /// Three-tone isolation readings.
    pub const ISO_THREE_TONE: u64 = 5;
    /// Photodiode traces of the IF-trace scenario.
    pub const IF_TRACE: u64 = 6;
    /// Floor repetitions of the noise-density calibration.
    pub const NOISE_CAL: u64 = 7;
}

/// Per-job RNG seed: the base seed XORed with a stream tag (top bits) and
/// the job index (low bits). Jobs are independent and order-free, so a
/// sweep parallelizes while staying bit-reproducible.
pub fn derived_seed(base: u64, stream: u64, index: u64) -> u64 {
    debug_assert!(stream < (1 << 16), "stream tag must fit in 16 bits");
    debug_assert!(index < (1 << 48), "job index must fit in 48 bits");
    base ^ (stream << 48) ^ index
}

/// One tone of the baseband sum, described relative to the local
/// oscillator: amplitude, frequency offset, and phase offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasebandTone {
    pub amplitude_vpm: f64,
    /// Offset from the LO frequency, Hz. Sign matters only through the
    /// relative phases of multiple tones; a lone tone's envelope is
    /// symmetric in the offset sign.
    pub offset_hz: f64,
    pub phase_rad: f64,
}

/// Rotating-phasor state for one baseband tone.
#[derive(Debug, Clone)]
struct ToneState {
    amplitude: f64,
    re: f64,
    im: f64,
    rot_re: f64,
    rot_im: f64,
}

/// Streams the exact envelope |E_LO + Σᵢ Eᵢ·exp(j(Δωᵢt + Δφᵢ))| one sample
/// at a time via complex rotations — no trig calls in the hot loop. Each
/// phasor is renormalized every 16384 samples, keeping the accumulated
/// amplitude drift below ~1e-12 over hundreds of millions of samples.
#[derive(Debug, Clone)]
pub struct EnvelopeOscillator {
    lo_amplitude: f64,
    tones: Vec<ToneState>,
    since_renorm: u32,
}

impl EnvelopeOscillator {
    /// `tones` may be empty (constant envelope). Amplitudes must be ≥ 0
    /// and the sample rate positive; violations are programming errors.
    pub fn new(lo_amplitude_vpm: f64, tones: &[BasebandTone], sample_rate_hz: f64) -> Self {
        assert!(lo_amplitude_vpm >= 0.0, "LO amplitude must be nonnegative");
        assert!(sample_rate_hz > 0.0, "sample rate must be positive");
        let states = tones
            .iter()
            .map(|t| {
                assert!(t.amplitude_vpm >= 0.0, "tone amplitude must be nonnegative");
                let step = 2.0 * std::f64::consts::PI * t.offset_hz / sample_rate_hz;
                ToneState {
                    amplitude: t.amplitude_vpm,
                    re: t.phase_rad.cos(),
                    im: t.phase_rad.sin(),
                    rot_re: step.cos(),
                    rot_im: step.sin(),
                }
            })
            .collect();
        Self { lo_amplitude: lo_amplitude_vpm, tones: states, since_renorm: 0 }
    }

    /// Field magnitude at the current sample, then advance one sample.
    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        let mut sum_re = self.lo_amplitude;
        let mut sum_im = 0.0;
        for t in &mut self.tones {
            sum_re += t.amplitude * t.re;
            sum_im += t.amplitude * t.im;
            let re = t.re * t.rot_re - t.im * t.rot_im;
            t.im = t.re * t.rot_im + t.im * t.rot_re;
            t.re = re;
        }
        self.since_renorm += 1;
        if self.since_renorm == 16384 {
            self.since_renorm = 0;
            for t in &mut self.tones {
                let norm = (t.re * t.re + t.im * t.im).sqrt();
                t.re /= norm;
                t.im /= norm;
            }
        }
        (sum_re * sum_re + sum_im * sum_im).sqrt()
    }
}

/// Zero-signal lock-in floor statistics over independent noise seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorStats {
    /// Mean of the per-repetition lock-in r readings, V.
    pub mean_v: f64,
    /// Sample standard deviation of a single repetition, V.
    pub std_v: f64,
    pub reps: usize,
}

impl FloorStats {
    /// The no-noise floor: zero mean, zero spread.
    pub fn zero() -> Self {
        Self { mean_v: 0.0, std_v: 0.0, reps: 0 }
    }

    /// Flagging threshold: readings at or below mean + 3·std are
    /// indistinguishable from the zero-signal floor.
    pub fn threshold_v(&self) -> f64 {
        self.mean_v + 3.0 * self.std_v
    }
}

/// Runs one complete measurement: synthesize the envelope, transduce it,
/// demodulate, and report the settled reading. The duration is the
/// lock-in's settle window (settle_factor · τ); the reported r averages
/// the final τ of the run.
pub fn simulate_lockin_reading(
    eit: &EitModel,
    pd: &PhotodiodeModel,
    lockin: &LockInConfig,
    lo_amplitude_vpm: f64,
    tones: &[BasebandTone],
) -> Result<LockInOutput> {
    let fs = lockin.sample_rate_hz;
    let n_total = (lockin.settle_duration_s() * fs).round() as usize;
    if n_total == 0 {
        return Err(Error::InsufficientData(
            "settle window shorter than one sample".into(),
        ));
    }
    let mut osc = EnvelopeOscillator::new(lo_amplitude_vpm, tones, fs);
    let mut sampler = PhotodiodeSampler::new(eit, pd, fs)?;
    let mut acc = LockInAccumulator::new(lockin, n_total)?;
    for _ in 0..n_total {
        acc.push(sampler.next_sample(osc.next_sample()));
    }
    acc.finish()
}

/// Measures the zero-signal floor: `reps` independent readings with only
/// the LO present, seeded from `derived_seed(base_seed, stream, i)`.
/// Repetitions run in parallel; the result is order-independent.
pub fn zero_signal_floor(
    cfg: &ScenarioConfig,
    base_seed: u64,
    stream: u64,
    reps: usize,
    noise_density_v_per_sqrt_hz: f64,
) -> Result<FloorStats> {
    if reps < 2 {
        return Err(Error::InsufficientData(format!(
            "floor statistics need at least 2 repetitions, got {reps}"
        )));
    }
    let readings: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let pd = PhotodiodeModel::new(
                cfg.photodiode_gain_v,
                cfg.photodiode_dark_v,
                noise_density_v_per_sqrt_hz,
                derived_seed(base_seed, stream, i as u64),
            )?;
            let out = simulate_lockin_reading(&cfg.eit, &pd, &cfg.lockin, cfg.e_lo_vpm, &[])?;
            Ok(out.r_v)
        })
        .collect::<Result<_>>()?;
    let mean = readings.iter().sum::<f64>() / reps as f64;
    let var = readings.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / (reps - 1) as f64;
    Ok(FloorStats { mean_v: mean, std_v: var.sqrt(), reps })
}

/// Result of the scripted noise-density calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// Calibrated white-noise density, V/√Hz.
    pub density_v_per_sqrt_hz: f64,
    /// Noiseless lock-in response at the target field, V — what the floor
    /// was matched to.
    pub target_r_v: f64,
    /// Floor mean actually measured at the calibrated density, V.
    pub floor_mean_v: f64,
    /// The field whose response defines the floor, V/m.
    pub target_e_cell_vpm: f64,
    /// Floor repetitions per bisection evaluation.
    pub reps: usize,
}

/// Calibrates the photodiode noise density so the zero-signal floor mean
/// equals the noiseless response at `target_e_cell_vpm`: the detection
/// knee is pinned to the target field rather than derived from a noise
/// budget the source material does not provide.
///
/// The floor is evaluated with fixed derived seeds (stream
/// [`streams::NOISE_CAL`]), making the objective deterministic and — the
/// demodulated floor being proportional to the density — exactly monotone,
/// so bisection converges cleanly. The result is reproducible for a given
/// config and seed.
pub fn calibrate_noise_density(
    cfg: &ScenarioConfig,
    target_e_cell_vpm: f64,
    reps: usize,
) -> Result<NoiseCalibration> {
    if !(target_e_cell_vpm > 0.0) {
        return Err(Error::Domain(format!(
            "calibration target field must be positive, got {target_e_cell_vpm} V/m"
        )));
    }
    let noiseless = PhotodiodeModel::new(
        cfg.photodiode_gain_v,
        cfg.photodiode_dark_v,
        0.0,
        0,
    )?;
    let tone = BasebandTone {
        amplitude_vpm: target_e_cell_vpm,
        offset_hz: cfg.lockin.f_ref_hz,
        phase_rad: cfg.phase_sig_rad - cfg.phase_lo_rad,
    };
    let target_r =
        simulate_lockin_reading(&cfg.eit, &noiseless, &cfg.lockin, cfg.e_lo_vpm, &[tone])?
            .r_v;
    if !(target_r > 0.0) {
        return Err(Error::Numerical(format!(
            "noiseless response at {target_e_cell_vpm} V/m is not positive; \
             cannot anchor the noise floor"
        )));
    }

    let floor = |density: f64| -> Result<f64> {
        Ok(zero_signal_floor(cfg, cfg.seed, streams::NOISE_CAL, reps, density)?.mean_v)
    };

    // The floor is linear in the density for fixed seeds, so one probe
    // brackets the root tightly; bisection then nails it regardless.
    let probe_density = 1e-6;
    let probe_floor = floor(probe_density)?;
    if !(probe_floor > 0.0) {
        return Err(Error::Numerical(
            "zero-signal floor did not respond to injected noise".into(),
        ));
    }
    let center = probe_density * target_r / probe_floor;
    let mut lo = center * 0.5;
    let mut hi = center * 2.0;
    for _ in 0..64 {
        if floor(lo)? < target_r {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..64 {
        if floor(hi)? > target_r {
            break;
        }
        hi *= 2.0;
    }
    while (hi - lo) > 1e-5 * hi {
        let mid = 0.5 * (lo + hi);
        if floor(mid)? < target_r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let density = 0.5 * (lo + hi);
    let floor_mean = floor(density)?;
    Ok(NoiseCalibration {
        density_v_per_sqrt_hz: density,
        target_r_v: target_r,
        floor_mean_v: floor_mean,
        target_e_cell_vpm,
        reps,
    })
}
