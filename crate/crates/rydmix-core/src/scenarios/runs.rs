//! End-to-end scenario runners that regenerate the headline data sets:
//! EIT/AT spectra, IF time traces, the weak-field detection sweep with
//! regime flagging, and the neighboring-signal isolation study.
//!
//! Every emitted CSV opens with the same metadata block — config hash,
//! seed, cutoff convention, pole count, an optional timestamp, and the
//! full resolved-config echo — so a data file is traceable to the exact
//! configuration that produced it. With the timestamp suppressed
//! (`--reproducible`) reruns are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::atoms::at_splitting;
use crate::fields::{ToneField, TonePair};
use crate::linkbudget::{dbm_to_watts, e_cell, power_for_e_cell};
use crate::lockin::{rejection_db, CutoffConvention};
use crate::scenarios::config::{ScenarioConfig, SweepScale, SweepVariable};
use crate::scenarios::pipeline::{
    derived_seed, simulate_lockin_reading, streams, zero_signal_floor, BasebandTone,
    FloorStats,
};
use crate::transducer::{eit_spectrum, photodiode_trace};
use crate::{Error, Result};

/// Provenance block embedded at the top of every output file.
#[derive(Debug, Clone)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub fc_convention: CutoffConvention,
    pub pole_count: usize,
    /// When set, the timestamp comment is omitted so reruns are
    /// byte-identical.
    pub reproducible: bool,
    canonical: Vec<(String, String)>,
}

impl RunMetadata {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            config_hash: cfg.config_hash().to_string(),
            seed: cfg.seed,
            fc_convention: cfg.lockin.cutoff_convention,
            pole_count: cfg.lockin.pole_count(),
            reproducible: cfg.reproducible,
            canonical: cfg.canonical_entries().to_vec(),
        }
    }

    /// Comment lines for a file header: the four identity lines, the
    /// optional timestamp, run-specific extras, then the config echo.
    pub fn comment_lines(&self, extra: &[(&str, String)]) -> Vec<String> {
        let mut lines = vec![
            format!("config_hash = {}", self.config_hash),
            format!("seed = {}", self.seed),
            format!("fc_convention = {}", self.fc_convention.as_str()),
            format!("pole_count = {}", self.pole_count),
        ];
        if !self.reproducible {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            lines.push(format!("timestamp_unix_s = {now}"));
        }
        for (k, v) in extra {
            lines.push(format!("{k} = {v}"));
        }
        for (k, v) in &self.canonical {
            lines.push(format!("{k} = {v}"));
        }
        lines
    }
}

/// Creates `dir/name` (making `dir` if needed) with a buffered writer.
fn create_output(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn write_table(
    out: &mut impl Write,
    comments: &[String],
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Detection-regime label attached to each weak-field sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeFlag {
    /// Linear mixer regime: the point is trustworthy for calibration.
    Ok,
    /// Reading indistinguishable from the zero-signal floor
    /// (r ≤ floor mean + 3·floor std).
    NoiseFloor,
    /// Signal field beyond half the AT-resolution field: the transducer
    /// gain is rolling off and linear readout underestimates the field.
    AtRolloff,
    /// Signal at or above the LO field: the two-tone weak-field picture
    /// no longer applies at all (computed with the exact envelope).
    ExceedsLo,
}

impl RegimeFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeFlag::Ok => "ok",
            RegimeFlag::NoiseFloor => "noise-floor",
            RegimeFlag::AtRolloff => "at-rolloff",
            RegimeFlag::ExceedsLo => "exceeds-lo",
        }
    }
}

/// One weak-field sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// √(horn input power), √W — the conventional x-axis for the linear
    /// far-field regime.
    pub sqrt_p_rf_sqrtw: f64,
    /// Signal field at the atoms, V/m.
    pub e_cell_vpm: f64,
    /// Settled lock-in magnitude, V.
    pub lockin_r_v: f64,
    pub flag: RegimeFlag,
}

/// Complete weak-field sweep: rows in sweep order plus the zero-signal
/// floor the flags were judged against.
#[derive(Debug, Clone)]
pub struct WeakFieldSweep {
    pub rows: Vec<SweepRow>,
    pub floor: FloorStats,
    pub meta: RunMetadata,
}

impl WeakFieldSweep {
    /// Writes `weakfield_sweep.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        let extra = [
            ("floor_mean_v", format!("{}", self.floor.mean_v)),
            ("floor_std_v", format!("{}", self.floor.std_v)),
            ("floor_threshold_v", format!("{}", self.floor.threshold_v())),
            ("floor_reps", format!("{}", self.floor.reps)),
        ];
        let (path, mut out) = create_output(dir, "weakfield_sweep.csv")?;
        write_table(
            &mut out,
            &self.meta.comment_lines(&extra),
            "sqrt_p_rf_sqrtw,e_cell_vpm,lockin_r_v,regime_flag",
            self.rows.iter().map(|r| {
                format!(
                    "{},{},{},{}",
                    r.sqrt_p_rf_sqrtw,
                    r.e_cell_vpm,
                    r.lockin_r_v,
                    r.flag.as_str()
                )
            }),
        )?;
        Ok(path)
    }
}

/// Maps one sweep value to (√P at the horn in √W, signal field in V/m).
fn sweep_point(cfg: &ScenarioConfig, value: f64) -> Result<(f64, f64)> {
    match cfg.sweep.variable {
        SweepVariable::GeneratorDbm => {
            let p_w = dbm_to_watts(cfg.horn_power_dbm(value));
            Ok((p_w.sqrt(), e_cell(p_w, &cfg.link, &cfg.cell_factor)))
        }
        SweepVariable::ESigVpm => {
            if value == 0.0 {
                return Ok((0.0, 0.0));
            }
            let p_dbm = power_for_e_cell(value, &cfg.link, &cfg.cell_factor)?;
            Ok((dbm_to_watts(p_dbm).sqrt(), value))
        }
    }
}

/// Runs the weak-field detection sweep: per point, synthesize the exact
/// two-tone envelope, transduce with (optional) noise, demodulate at the
/// reference, and flag the detection regime. Points run in parallel with
/// per-point derived seeds; rows come back in sweep order.
///
/// The noise-floor flag marks readings within 3σ of the zero-signal
/// floor and is closed downward in field, so the flagged region is a
/// contiguous prefix of the sweep (the lowest fields); with noise
/// disabled no point is noise-flagged.
pub fn run_weak_field_sweep(cfg: &ScenarioConfig) -> Result<WeakFieldSweep> {
    let values = cfg.sweep.values();
    let offset_hz = cfg.f_sig_hz - cfg.f_lo_hz;
    let phase_rad = cfg.phase_sig_rad - cfg.phase_lo_rad;

    let raw: Vec<(f64, f64, f64)> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let (sqrt_p, e_sig) = sweep_point(cfg, v)?;
            let tones = if e_sig > 0.0 {
                vec![BasebandTone { amplitude_vpm: e_sig, offset_hz, phase_rad }]
            } else {
                Vec::new()
            };
            let pd = cfg.photodiode(derived_seed(cfg.seed, streams::SWEEP_POINT, i as u64));
            let out =
                simulate_lockin_reading(&cfg.eit, &pd, &cfg.lockin, cfg.e_lo_vpm, &tones)?;
            Ok((sqrt_p, e_sig, out.r_v))
        })
        .collect::<Result<_>>()?;

    let floor = if cfg.noise_enabled {
        zero_signal_floor(
            cfg,
            cfg.seed,
            streams::FLOOR,
            cfg.sweep.floor_reps,
            cfg.noise_density_v_per_sqrt_hz,
        )?
    } else {
        FloorStats::zero()
    };

    // Close the noise-flagged set downward in field: every point at or
    // below the highest floor-level field is inside the floor region.
    let threshold = floor.threshold_v();
    let flag_cutoff = raw
        .iter()
        .filter(|&&(_, _, r)| cfg.noise_enabled && r <= threshold)
        .map(|&(_, e, _)| e)
        .fold(f64::NEG_INFINITY, f64::max);

    let e_at = cfg.eit.resolvable_field();
    let rows = raw
        .into_iter()
        .map(|(sqrt_p, e_sig, r)| {
            let flag = if e_sig >= cfg.e_lo_vpm {
                RegimeFlag::ExceedsLo
            } else if e_sig > 0.5 * e_at {
                RegimeFlag::AtRolloff
            } else if cfg.noise_enabled && e_sig <= flag_cutoff {
                RegimeFlag::NoiseFloor
            } else {
                RegimeFlag::Ok
            };
            SweepRow { sqrt_p_rf_sqrtw: sqrt_p, e_cell_vpm: e_sig, lockin_r_v: r, flag }
        })
        .collect();

    Ok(WeakFieldSweep { rows, floor, meta: RunMetadata::from_config(cfg) })
}

/// One isolation-sweep point at a fixed interferer detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationRow {
    /// Interferer-to-signal amplitude ratio, dB.
    pub ratio_db: f64,
    /// Interferer field at the atoms, V/m.
    pub e_interferer_vpm: f64,
    /// Lock-in reading with the interferer alone (plus LO), V.
    pub leak_r_v: f64,
    /// Interferer-only reading relative to the in-tune baseline, dB,
    /// clamped from below at the noise floor.
    pub leak_rel_db: f64,
    /// Steady-state filter prediction for the leak, dB: ratio plus the
    /// analytic cascade rejection at this detuning. Comparing against
    /// `leak_rel_db` separates filter rejection from measurement-time and
    /// noise-floor effects.
    pub predicted_leak_rel_db: f64,
    /// Lock-in reading with in-tune signal and interferer together, V.
    pub three_tone_r_v: f64,
    /// Three-tone reading relative to the in-tune baseline, dB.
    pub three_tone_rel_db: f64,
}

/// Isolation sweep at one interferer detuning.
#[derive(Debug, Clone)]
pub struct IsolationCurve {
    pub detuning_hz: f64,
    pub rows: Vec<IsolationRow>,
    /// First ratio at which the interferer-only response reaches −3 dB of
    /// the in-tune baseline (linear interpolation between grid points);
    /// `None` when the leak stays below −3 dB across the whole sweep.
    pub crossing_ratio_db: Option<f64>,
}

/// Full isolation study: one curve per configured detuning, a shared
/// in-tune baseline, and the noise floor the curves were clamped at.
#[derive(Debug, Clone)]
pub struct IsolationResult {
    pub curves: Vec<IsolationCurve>,
    /// In-tune-only lock-in reading the curves are normalized to, V.
    pub baseline_r_v: f64,
    pub floor: FloorStats,
    pub meta: RunMetadata,
}

impl IsolationResult {
    /// Writes one `isolation_df_<detuning>hz.csv` per curve plus a
    /// `isolation_crossings.csv` summary; returns all paths.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for curve in &self.curves {
            let crossing = match curve.crossing_ratio_db {
                Some(c) => format!("{c}"),
                None => "not-reached".to_string(),
            };
            let extra = [
                ("detuning_hz", format!("{}", curve.detuning_hz)),
                ("e_o_vpm", format!("{}", self.meta_e_o())),
                ("baseline_r_v", format!("{}", self.baseline_r_v)),
                ("floor_mean_v", format!("{}", self.floor.mean_v)),
                ("crossing_ratio_db", crossing),
            ];
            let name = format!("isolation_df_{}hz.csv", curve.detuning_hz);
            let (path, mut out) = create_output(dir, &name)?;
            write_table(
                &mut out,
                &self.meta.comment_lines(&extra),
                "ratio_db,e_interferer_vpm,leak_r_v,leak_rel_db,\
                 predicted_leak_rel_db,three_tone_r_v,three_tone_rel_db",
                curve.rows.iter().map(|r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.ratio_db,
                        r.e_interferer_vpm,
                        r.leak_r_v,
                        r.leak_rel_db,
                        r.predicted_leak_rel_db,
                        r.three_tone_r_v,
                        r.three_tone_rel_db
                    )
                }),
            )?;
            paths.push(path);
        }

        let (path, mut out) = create_output(dir, "isolation_crossings.csv")?;
        write_table(
            &mut out,
            &self.meta.comment_lines(&[(
                "baseline_r_v",
                format!("{}", self.baseline_r_v),
            )]),
            "detuning_hz,crossing_ratio_db",
            self.curves.iter().map(|c| {
                let crossing = match c.crossing_ratio_db {
                    Some(v) => format!("{v}"),
                    None => "not-reached".to_string(),
                };
                format!("{},{}", c.detuning_hz, crossing)
            }),
        )?;
        paths.push(path);
        Ok(paths)
    }

    fn meta_e_o(&self) -> f64 {
        self.meta
            .canonical
            .iter()
            .find(|(k, _)| k == "isolation.e_o_vpm")
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or(f64::NAN)
    }
}

/// dB relative to a baseline, clamped from below at the floor level: a
/// reading cannot be resolved beneath the measured zero-signal floor, so
/// sub-floor values report the floor itself. With noise disabled the
/// clamp is zero and the ratio is exact.
fn rel_db(r: f64, baseline: f64, clamp: f64) -> f64 {
    let x = r.max(clamp);
    if x <= 0.0 {
        return -300.0;
    }
    20.0 * (x / baseline).log10()
}

/// Runs the neighboring-signal isolation study.
///
/// Three tones reach the atoms: the LO on resonance, the in-tune signal
/// E_o at the reference offset, and an interferer detuned a further Δf.
/// Sweeping the interferer-to-signal ratio and demodulating at the
/// reference answers "how large may a neighbor grow before it bleeds into
/// this channel" — the −3 dB crossing reported per detuning. Curves are
/// normalized to the in-tune-only baseline. Interferer-only and
/// three-tone readings are both emitted; the crossing is measured on the
/// interferer-only curve, which starts below the baseline and rises
/// through −3 dB, while the three-tone curve starts at ≈0 dB.
pub fn run_isolation_sweep(cfg: &ScenarioConfig) -> Result<IsolationResult> {
    let e_o = cfg.isolation_e_o_vpm;
    let sig_offset_hz = cfg.f_sig_hz - cfg.f_lo_hz;
    let sig_phase = cfg.phase_sig_rad - cfg.phase_lo_rad;
    let in_tune = BasebandTone {
        amplitude_vpm: e_o,
        offset_hz: sig_offset_hz,
        phase_rad: sig_phase,
    };

    let baseline_pd =
        cfg.photodiode(derived_seed(cfg.seed, streams::ISO_BASELINE, 0));
    let baseline =
        simulate_lockin_reading(&cfg.eit, &baseline_pd, &cfg.lockin, cfg.e_lo_vpm, &[in_tune])?;
    let baseline_r = baseline.r_v;
    if !(baseline_r > 0.0) || !baseline_r.is_finite() {
        return Err(Error::Numerical(format!(
            "in-tune baseline response is {baseline_r} V; cannot normalize isolation curves"
        )));
    }

    let floor = if cfg.noise_enabled {
        zero_signal_floor(
            cfg,
            cfg.seed,
            streams::FLOOR,
            cfg.sweep.floor_reps,
            cfg.noise_density_v_per_sqrt_hz,
        )?
    } else {
        FloorStats::zero()
    };
    let clamp = floor.mean_v;

    let ratios = crate::scenarios::config::grid(
        cfg.isolation_ratio_start_db,
        cfg.isolation_ratio_stop_db,
        cfg.isolation_ratio_points,
        SweepScale::Linear,
    );

    let mut curves = Vec::with_capacity(cfg.isolation_detunings_hz.len());
    for (d_idx, &detuning) in cfg.isolation_detunings_hz.iter().enumerate() {
        let rejection = rejection_db(&cfg.lockin, detuning);
        let rows: Vec<IsolationRow> = ratios
            .par_iter()
            .enumerate()
            .map(|(i, &ratio_db)| {
                let job = ((d_idx as u64) << 24) | i as u64;
                let e_int = e_o * 10f64.powf(ratio_db / 20.0);
                let interferer = BasebandTone {
                    amplitude_vpm: e_int,
                    offset_hz: sig_offset_hz + detuning,
                    phase_rad: 0.0,
                };
                let leak_pd =
                    cfg.photodiode(derived_seed(cfg.seed, streams::ISO_LEAK, job));
                let leak = simulate_lockin_reading(
                    &cfg.eit,
                    &leak_pd,
                    &cfg.lockin,
                    cfg.e_lo_vpm,
                    &[interferer],
                )?;
                let three_pd =
                    cfg.photodiode(derived_seed(cfg.seed, streams::ISO_THREE_TONE, job));
                let three = simulate_lockin_reading(
                    &cfg.eit,
                    &three_pd,
                    &cfg.lockin,
                    cfg.e_lo_vpm,
                    &[in_tune, interferer],
                )?;
                Ok(IsolationRow {
                    ratio_db,
                    e_interferer_vpm: e_int,
                    leak_r_v: leak.r_v,
                    leak_rel_db: rel_db(leak.r_v, baseline_r, clamp),
                    predicted_leak_rel_db: ratio_db + rejection,
                    three_tone_r_v: three.r_v,
                    three_tone_rel_db: rel_db(three.r_v, baseline_r, clamp),
                })
            })
            .collect::<Result<_>>()?;

        let crossing_ratio_db = find_crossing(&rows, -3.0);
        curves.push(IsolationCurve { detuning_hz: detuning, rows, crossing_ratio_db });
    }

    Ok(IsolationResult {
        curves,
        baseline_r_v: baseline_r,
        floor,
        meta: RunMetadata::from_config(cfg),
    })
}

/// First upward crossing of `level` on the interferer-only curve,
/// linearly interpolated between the bracketing grid points.
fn find_crossing(rows: &[IsolationRow], level: f64) -> Option<f64> {
    let first = rows.first()?;
    if first.leak_rel_db >= level {
        return Some(first.ratio_db);
    }
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.leak_rel_db >= level {
            let t = (level - a.leak_rel_db) / (b.leak_rel_db - a.leak_rel_db);
            return Some(a.ratio_db + t * (b.ratio_db - a.ratio_db));
        }
    }
    None
}

/// Writes one transmission-vs-detuning spectrum per configured field into
/// `dir` (`spectrum_00.csv`, `spectrum_01.csv`, …); returns the paths.
/// Pure closed-form model evaluation — no time-domain simulation.
pub fn run_spectrum(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let meta = RunMetadata::from_config(cfg);
    let span = cfg.spectrum_detuning_span_hz;
    let detunings = crate::scenarios::config::grid(
        -span / 2.0,
        span / 2.0,
        cfg.spectrum_points,
        SweepScale::Linear,
    );
    let mut paths = Vec::new();
    for (i, &e) in cfg.spectrum_e_fields_vpm.iter().enumerate() {
        let split = at_splitting(e, &cfg.transition)?;
        let extra = [
            ("e_field_vpm", format!("{e}")),
            ("at_splitting_hz", format!("{split}")),
        ];
        let (path, mut out) = create_output(dir, &format!("spectrum_{i:02}.csv"))?;
        write_table(
            &mut out,
            &meta.comment_lines(&extra),
            "coupling_detuning_hz,transmission",
            detunings
                .iter()
                .map(|&d| format!("{},{}", d, eit_spectrum(&cfg.eit, d, e))),
        )?;
        paths.push(path);
    }
    Ok(paths)
}

/// Emits an envelope trace and a photodiode trace per configured signal
/// field (`if_envelope_NN.csv` / `if_photodiode_NN.csv`); returns all
/// paths. The envelope is the field magnitude before detection (V/m);
/// the photodiode trace is the transduced voltage including noise when
/// enabled, each trace drawing from its own derived seed.
pub fn run_if_trace(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let meta = RunMetadata::from_config(cfg);
    let form = if cfg.if_trace_exact { "exact" } else { "weak" };
    let mut paths = Vec::new();
    for (i, &e_sig) in cfg.if_trace_e_sig_vpm.iter().enumerate() {
        let pair = TonePair::new(
            ToneField::new(cfg.e_lo_vpm, cfg.f_lo_hz, cfg.phase_lo_rad)?,
            ToneField::new(e_sig, cfg.f_sig_hz, cfg.phase_sig_rad)?,
        );
        let envelope = crate::fields::synthesize_envelope_trace(
            &pair,
            cfg.sample_rate_hz,
            cfg.if_trace_duration_s,
            cfg.if_trace_exact,
        )?;
        let extra = [
            ("e_sig_vpm", format!("{e_sig}")),
            ("envelope_form", form.to_string()),
        ];
        let comments = meta.comment_lines(&extra);

        let (env_path, mut env_out) =
            create_output(dir, &format!("if_envelope_{i:02}.csv"))?;
        envelope.write_csv(&mut env_out, &comments)?;
        paths.push(env_path);

        let pd = cfg.photodiode(derived_seed(cfg.seed, streams::IF_TRACE, i as u64));
        let voltage = photodiode_trace(&cfg.eit, &pd, &envelope)?;
        let (pd_path, mut pd_out) =
            create_output(dir, &format!("if_photodiode_{i:02}.csv"))?;
        voltage.write_csv_named(&mut pd_out, &comments, "volts")?;
        paths.push(pd_path);
    }
    Ok(paths)
}
