//! Scenario configuration: a flat `section.key = value` text format with
//! layered resolution (built-in defaults ← file ← command-line overrides).
//!
//! Every resolved configuration carries a canonical echo of all key/value
//! pairs — defaults included — and a 64-bit FNV-1a hash over that echo.
//! The hash is embedded in every output file, so any two artifacts with
//! equal hashes were produced from physically identical configurations,
//! regardless of which values came from defaults, the file, or flags.
//!
//! Unknown keys are rejected with their line number rather than ignored:
//! a typo like `lockin.tua_s` must fail loudly, not silently fall back to
//! a default time constant.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::atoms::RydbergTransition;
use crate::linkbudget::{AntennaLink, CellFactor};
use crate::lockin::{CutoffConvention, LockInConfig};
use crate::transducer::{EitModel, PhotodiodeModel, DEFAULT_NOISE_DENSITY_V_PER_SQRT_HZ};
use crate::{Error, Result};

/// One assignment from a config file, with its source line for diagnostics.
#[derive(Debug, Clone)]
struct RawEntry {
    value: String,
    line: usize,
}

/// Parsed but untyped configuration: key → (value, line).
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, RawEntry>,
}

impl RawConfig {
    /// A config with no file-provided keys; resolves to pure defaults.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces one key from the command line (section-style
    /// flags such as `--transition`), overriding any file-provided value.
    /// The entry is reported as "command line" rather than a line number
    /// in later error messages.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let well_formed = key.contains('.')
            && !key.starts_with('.')
            && !key.ends_with('.')
            && key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
        if !well_formed {
            return Err(Error::Config(format!(
                "command-line key `{key}` must be lowercase `section.key`"
            )));
        }
        self.entries.insert(
            key.to_string(),
            RawEntry { value: value.trim().to_string(), line: 0 },
        );
        Ok(())
    }
}

/// Parses the flat config grammar: one `section.key = value` per line,
/// `#` starts a comment (full-line or trailing), blank lines ignored.
pub fn parse_config_text(text: &str) -> Result<RawConfig> {
    let mut entries: BTreeMap<String, RawEntry> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let uncommented = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = uncommented.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((lhs, rhs)) = trimmed.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {line_no}: expected `section.key = value`, got `{trimmed}`"
            )));
        };
        let key = lhs.trim();
        let value = rhs.trim();
        let well_formed = key.contains('.')
            && !key.starts_with('.')
            && !key.ends_with('.')
            && !key.is_empty()
            && key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
        if !well_formed {
            return Err(Error::Config(format!(
                "config line {line_no}: key `{key}` must be lowercase `section.key`"
            )));
        }
        if let Some(prev) = entries.insert(
            key.to_string(),
            RawEntry { value: value.to_string(), line: line_no },
        ) {
            return Err(Error::Config(format!(
                "config line {line_no}: duplicate key `{key}` (first set at line {})",
                prev.line
            )));
        }
    }
    Ok(RawConfig { entries })
}

/// Reads and parses a config file; a missing or unreadable file is a
/// config error (the path is user input).
pub fn parse_config_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file `{}`: {e}", path.display()))
    })?;
    parse_config_text(&text)
}

/// Command-line overrides; these outrank file values, which outrank
/// defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces `sim.seed`.
    pub seed: Option<u64>,
    /// Replaces `lockin.fc_convention`.
    pub fc_convention: Option<CutoffConvention>,
    /// Suppresses the timestamp comment so reruns are byte-identical.
    pub reproducible: bool,
}

/// Which physical quantity the weak-field sweep steps through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Signal-generator output power in dBm, mapped through the loss chain
    /// and the far-field link to a cell field.
    GeneratorDbm,
    /// Signal field at the atoms in V/m, bypassing the antenna link.
    ESigVpm,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::GeneratorDbm => "generator_dbm",
            SweepVariable::ESigVpm => "e_sig_vpm",
        }
    }
}

/// Point spacing of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepScale {
    Linear,
    Log,
}

impl SweepScale {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepScale::Linear => "linear",
            SweepScale::Log => "log",
        }
    }
}

/// Resolved sweep specification for the weak-field run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    /// Number of sweep points, ≥ 2.
    pub points: usize,
    pub scale: SweepScale,
    /// Zero-signal repetitions used to estimate the noise floor, ≥ 2.
    pub floor_reps: usize,
}

impl SweepSpec {
    /// The sweep grid, `points` values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        grid(self.start, self.stop, self.points, self.scale)
    }
}

/// `n ≥ 2` values from `start` to `stop` inclusive, linearly or
/// geometrically spaced. Log spacing requires both endpoints positive,
/// which resolution has already enforced.
pub fn grid(start: f64, stop: f64, n: usize, scale: SweepScale) -> Vec<f64> {
    assert!(n >= 2, "a sweep needs at least two points, got {n}");
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let f = i as f64 / last;
            match scale {
                SweepScale::Linear => start + (stop - start) * f,
                SweepScale::Log => start * (stop / start).powf(f),
            }
        })
        .collect()
}

/// Fully resolved scenario configuration. Field groups mirror the config
/// sections; see the defaults table in [`resolve`] for the key names.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub transition: RydbergTransition,
    /// Local-oscillator tone frequency, Hz.
    pub f_lo_hz: f64,
    /// Signal tone frequency, Hz.
    pub f_sig_hz: f64,
    /// Local-oscillator field at the atoms, V/m.
    pub e_lo_vpm: f64,
    pub phase_lo_rad: f64,
    pub phase_sig_rad: f64,
    pub eit: EitModel,
    pub link: AntennaLink,
    pub cell_factor: CellFactor,
    /// Cable/connector losses between generator and horn, dB each.
    pub losses_db: Vec<f64>,
    /// Fully resolved lock-in settings (reference, τ, slope, sampling,
    /// settle factor, cutoff convention).
    pub lockin: LockInConfig,
    pub photodiode_gain_v: f64,
    pub photodiode_dark_v: f64,
    pub noise_enabled: bool,
    pub noise_density_v_per_sqrt_hz: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub sweep: SweepSpec,
    pub spectrum_e_fields_vpm: Vec<f64>,
    pub spectrum_detuning_span_hz: f64,
    pub spectrum_points: usize,
    pub if_trace_e_sig_vpm: Vec<f64>,
    pub if_trace_duration_s: f64,
    pub if_trace_exact: bool,
    /// In-tune signal field for the isolation study, V/m.
    pub isolation_e_o_vpm: f64,
    /// Interferer offsets from the in-tune signal, Hz.
    pub isolation_detunings_hz: Vec<f64>,
    pub isolation_ratio_start_db: f64,
    pub isolation_ratio_stop_db: f64,
    pub isolation_ratio_points: usize,
    /// Set by `--reproducible`: omit the timestamp comment from outputs.
    pub reproducible: bool,
    config_hash: String,
    canonical: Vec<(String, String)>,
}

impl ScenarioConfig {
    /// Pure-defaults configuration (equivalent to an empty config file).
    pub fn defaults() -> Self {
        resolve(&RawConfig::empty(), &Overrides::default())
            .expect("built-in defaults must resolve")
    }

    /// 16-hex-digit FNV-1a hash over the canonical key/value echo.
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// All resolved key/value pairs in key order — the exact text the
    /// config hash covers, and the echo embedded in output files.
    pub fn canonical_entries(&self) -> &[(String, String)] {
        &self.canonical
    }

    /// Beat frequency of the configured tone pair, Hz.
    pub fn if_frequency_hz(&self) -> f64 {
        (self.f_sig_hz - self.f_lo_hz).abs()
    }

    /// Photodiode model with the configured gain/dark/noise and the given
    /// noise seed; noise density is zero when noise is disabled.
    pub fn photodiode(&self, rng_seed: u64) -> PhotodiodeModel {
        let density = if self.noise_enabled {
            self.noise_density_v_per_sqrt_hz
        } else {
            0.0
        };
        PhotodiodeModel::new(self.photodiode_gain_v, self.photodiode_dark_v, density, rng_seed)
            .expect("photodiode parameters were validated at resolve time")
    }

    /// Generator power minus the configured chain losses, dBm.
    pub fn horn_power_dbm(&self, generator_dbm: f64) -> f64 {
        generator_dbm - self.losses_db.iter().sum::<f64>()
    }
}

/// Typed access to raw entries with consumption tracking, so leftovers can
/// be reported as unknown keys, and a canonical echo of what was resolved.
struct Resolver<'a> {
    raw: &'a RawConfig,
    used: BTreeSet<String>,
    canonical: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self { raw, used: BTreeSet::new(), canonical: Vec::new() }
    }

    /// "config key `k` (line N)" when file-provided, "(command line)" for
    /// CLI section flags, "(default)" otherwise.
    fn loc(&self, key: &str) -> String {
        match self.raw.entries.get(key) {
            Some(e) if e.line == 0 => format!("config key `{key}` (command line)"),
            Some(e) => format!("config key `{key}` (line {})", e.line),
            None => format!("config key `{key}` (default)"),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.raw.entries.get(key).map(|e| e.value.clone())
    }

    fn record(&mut self, key: &str, canonical_value: String) {
        self.canonical.push((key.to_string(), canonical_value));
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = match self.take(key) {
            Some(s) => s.parse::<f64>().map_err(|_| {
                Error::Config(format!("{}: invalid number `{s}`", self.loc(key)))
            })?,
            None => default,
        };
        if !v.is_finite() {
            return Err(Error::Config(format!("{}: value must be finite", self.loc(key))));
        }
        self.record(key, format!("{v}"));
        Ok(v)
    }

    fn positive_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64(key, default)?;
        if !(v > 0.0) {
            return Err(Error::Config(format!("{}: must be > 0, got {v}", self.loc(key))));
        }
        Ok(v)
    }

    fn nonneg_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64(key, default)?;
        if !(v >= 0.0) {
            return Err(Error::Config(format!("{}: must be ≥ 0, got {v}", self.loc(key))));
        }
        Ok(v)
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        let v = match self.take(key) {
            Some(s) => s.parse::<u64>().map_err(|_| {
                Error::Config(format!(
                    "{}: invalid unsigned integer `{s}`",
                    self.loc(key)
                ))
            })?,
            None => default,
        };
        self.record(key, format!("{v}"));
        Ok(v)
    }

    fn usize_min(&mut self, key: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.u64(key, default as u64)? as usize;
        if v < min {
            return Err(Error::Config(format!(
                "{}: must be ≥ {min}, got {v}",
                self.loc(key)
            )));
        }
        Ok(v)
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool> {
        let v = match self.take(key) {
            Some(s) => match s.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Config(format!(
                        "{}: expected `true` or `false`, got `{other}`",
                        self.loc(key)
                    )))
                }
            },
            None => default,
        };
        self.record(key, format!("{v}"));
        Ok(v)
    }

    /// Comma-separated float list; an empty value is an empty list.
    fn f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let list = match self.take(key) {
            Some(s) if s.trim().is_empty() => Vec::new(),
            Some(s) => {
                let mut out = Vec::new();
                for part in s.split(',') {
                    let part = part.trim();
                    let v: f64 = part.parse().map_err(|_| {
                        Error::Config(format!(
                            "{}: invalid number `{part}` in list",
                            self.loc(key)
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Config(format!(
                            "{}: list values must be finite",
                            self.loc(key)
                        )));
                    }
                    out.push(v);
                }
                out
            }
            None => default.to_vec(),
        };
        let echo =
            list.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        self.record(key, echo);
        Ok(list)
    }

    fn choice<T: Copy>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
        name: impl Fn(T) -> &'static str,
        expected: &str,
    ) -> Result<T> {
        let v = match self.take(key) {
            Some(s) => parse(&s).ok_or_else(|| {
                Error::Config(format!(
                    "{}: expected one of {expected}, got `{s}`",
                    self.loc(key)
                ))
            })?,
            None => default,
        };
        self.record(key, name(v).to_string());
        Ok(v)
    }

    /// Errors on the first (lowest-line) key that no getter consumed.
    fn reject_unknown(&self) -> Result<()> {
        let mut unknown: Vec<(&String, usize)> = self
            .raw
            .entries
            .iter()
            .filter(|(k, _)| !self.used.contains(*k))
            .map(|(k, e)| (k, e.line))
            .collect();
        unknown.sort_by_key(|&(_, line)| line);
        if let Some(&(key, line)) = unknown.first() {
            let more = match unknown.len() {
                1 => String::new(),
                n => format!(" ({} more unknown keys follow)", n - 1),
            };
            return Err(Error::Config(format!(
                "unknown config key `{key}` (line {line}){more}"
            )));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over the canonical `key = value` lines in key order.
fn fnv1a_hash(entries: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in sorted {
        for byte in k.bytes().chain(*b" = ").chain(v.bytes()).chain(*b"\n") {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Resolves a raw config against the built-in defaults and CLI overrides.
///
/// Defaults reproduce the published operating point: 19.626000 GHz LO,
/// 19.626090 GHz signal (90 kHz beat), LO field at the two-Lorentzian
/// resolution limit, horn 0.385 m from the cell, τ = 3 s at 24 dB/octave.
pub fn resolve(raw: &RawConfig, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut r = Resolver::new(raw);

    let probe = r.positive_f64("transition.probe_wavelength_m", 852e-9)?;
    let coupling = r.positive_f64("transition.coupling_wavelength_m", 511.148e-9)?;
    let dipole_radial = r.positive_f64("transition.dipole_radial", 1476.6048)?;
    let dipole_angular = r.positive_f64("transition.dipole_angular", 0.48989)?;
    let linewidth = r.positive_f64("transition.eit_linewidth_hz", 4.0e6)?;
    let rf_resonance = r.positive_f64("transition.rf_resonance_hz", 19.626e9)?;
    let transition = RydbergTransition::new(
        probe,
        coupling,
        dipole_radial,
        dipole_angular,
        linewidth,
        rf_resonance,
    )
    .map_err(|e| Error::Config(format!("transition section: {e}")))?;

    let f_lo_hz = r.positive_f64("tones.f_lo_hz", 19.626e9)?;
    let f_sig_hz = r.positive_f64("tones.f_sig_hz", 19.62609e9)?;
    let e_lo_vpm = r.positive_f64("tones.e_lo_vpm", 0.72)?;
    let phase_lo_rad = r.f64("tones.phase_lo_rad", 0.0)?;
    let phase_sig_rad = r.f64("tones.phase_sig_rad", 0.0)?;

    let contrast = r.positive_f64("eit.contrast", 0.5)?;
    let background = r.nonneg_f64("eit.background_transmission", 0.3)?;
    let eit = EitModel::new(transition.clone(), contrast, background)
        .map_err(|e| Error::Config(format!("eit section: {e}")))?;

    let photodiode_gain_v = r.positive_f64("photodiode.responsivity_gain_v", 1.0)?;
    let photodiode_dark_v = r.f64("photodiode.dark_voltage_v", 0.0)?;

    let noise_enabled = r.boolean("noise.enabled", true)?;
    let noise_density =
        r.nonneg_f64("noise.density_v_per_sqrt_hz", DEFAULT_NOISE_DENSITY_V_PER_SQRT_HZ)?;

    let gain_db = r.f64("link.gain_db", 15.55)?;
    let gain_unc_db = r.nonneg_f64("link.gain_uncertainty_db", 0.4)?;
    let distance = r.positive_f64("link.distance_r_m", 0.385)?;
    let aperture = r.positive_f64("link.aperture_diagonal_a_m", 0.04828)?;
    let rf_lambda = r.positive_f64("link.rf_wavelength_m", 0.015286)?;
    let link = AntennaLink::new(gain_db, gain_unc_db, distance, aperture, rf_lambda)
        .map_err(|e| Error::Config(format!("link section: {e}")))?;
    let cf_value = r.positive_f64("link.cell_factor", 0.90)?;
    let cf_unc = r.nonneg_f64("link.cell_factor_uncertainty", 0.0)?;
    let cell_factor = CellFactor::new(cf_value, cf_unc)
        .map_err(|e| Error::Config(format!("link section: {e}")))?;
    let losses_db = r.f64_list("link.losses_db", &[])?;
    if losses_db.iter().any(|&l| l < 0.0) {
        return Err(Error::Config(format!(
            "{}: losses must be ≥ 0 dB each",
            r.loc("link.losses_db")
        )));
    }

    let f_ref_key = r.nonneg_f64("lockin.f_ref_hz", 0.0)?;
    let tau_s = r.positive_f64("lockin.tau_s", 3.0)?;
    let slope = r.u64("lockin.slope_db_per_octave", 24)?;
    let settle_factor = r.positive_f64("lockin.settle_factor", 10.0)?;
    let mut convention = r.choice(
        "lockin.fc_convention",
        CutoffConvention::InvTwoPiTau,
        |s| CutoffConvention::parse(s).ok(),
        CutoffConvention::as_str,
        "`inv-tau`, `inv-2pi-tau`",
    )?;
    let sample_rate_hz = r.positive_f64("sim.sample_rate_hz", 2e6)?;
    let mut seed = r.u64("sim.seed", 1)?;

    // CLI layer: the canonical echo (and hence the hash) reflects the
    // overridden values, so metadata always names what actually ran.
    if let Some(s) = overrides.seed {
        seed = s;
        let slot = r
            .canonical
            .iter_mut()
            .find(|(k, _)| k == "sim.seed")
            .expect("sim.seed was just recorded");
        slot.1 = format!("{seed}");
    }
    if let Some(c) = overrides.fc_convention {
        convention = c;
        let slot = r
            .canonical
            .iter_mut()
            .find(|(k, _)| k == "lockin.fc_convention")
            .expect("lockin.fc_convention was just recorded");
        slot.1 = convention.as_str().to_string();
    }

    // f_ref = 0 means "track the tone-pair beat"; a collision of the two
    // tone frequencies then leaves no reference to lock to.
    let f_ref_hz = if f_ref_key == 0.0 {
        (f_sig_hz - f_lo_hz).abs()
    } else {
        f_ref_key
    };
    if f_ref_hz == 0.0 {
        return Err(Error::Config(
            "config key `lockin.f_ref_hz` is 0 (auto) but `tones.f_lo_hz` equals \
             `tones.f_sig_hz`; set an explicit reference frequency"
                .into(),
        ));
    }
    let slope_u32 = u32::try_from(slope).map_err(|_| {
        Error::Config(format!(
            "{}: slope {slope} dB/octave is out of range",
            r.loc("lockin.slope_db_per_octave")
        ))
    })?;
    let lockin = LockInConfig::new(f_ref_hz, tau_s, slope_u32, sample_rate_hz)
        .map_err(|e| Error::Config(format!("lockin/sim sections: {e}")))?
        .with_settle_factor(settle_factor)
        .map_err(|e| Error::Config(format!("lockin section: {e}")))?
        .with_convention(convention);

    let variable = r.choice(
        "sweep.variable",
        SweepVariable::GeneratorDbm,
        |s| match s {
            "generator_dbm" => Some(SweepVariable::GeneratorDbm),
            "e_sig_vpm" => Some(SweepVariable::ESigVpm),
            _ => None,
        },
        SweepVariable::as_str,
        "`generator_dbm`, `e_sig_vpm`",
    )?;
    let start = r.f64("sweep.start", -130.0)?;
    let stop = r.f64("sweep.stop", -75.0)?;
    let points = r.usize_min("sweep.points", 23, 2)?;
    let scale = r.choice(
        "sweep.scale",
        SweepScale::Linear,
        |s| match s {
            "linear" => Some(SweepScale::Linear),
            "log" => Some(SweepScale::Log),
            _ => None,
        },
        SweepScale::as_str,
        "`linear`, `log`",
    )?;
    let floor_reps = r.usize_min("sweep.floor_reps", 16, 2)?;
    if scale == SweepScale::Log && !(start > 0.0 && stop > 0.0) {
        return Err(Error::Config(format!(
            "{}/{}: log spacing needs positive endpoints, got {start} and {stop}",
            r.loc("sweep.start"),
            r.loc("sweep.stop")
        )));
    }
    if variable == SweepVariable::ESigVpm && (start < 0.0 || stop < 0.0) {
        return Err(Error::Config(format!(
            "{}/{}: field sweep endpoints must be ≥ 0 V/m",
            r.loc("sweep.start"),
            r.loc("sweep.stop")
        )));
    }
    let sweep = SweepSpec { variable, start, stop, points, scale, floor_reps };

    let spectrum_e_fields_vpm = r.f64_list("spectrum.e_fields_vpm", &[0.0, 0.36, 0.72])?;
    if spectrum_e_fields_vpm.is_empty() || spectrum_e_fields_vpm.iter().any(|&e| e < 0.0) {
        return Err(Error::Config(format!(
            "{}: need at least one field, each ≥ 0 V/m",
            r.loc("spectrum.e_fields_vpm")
        )));
    }
    let spectrum_detuning_span_hz = r.positive_f64("spectrum.detuning_span_hz", 20e6)?;
    let spectrum_points = r.usize_min("spectrum.points", 2001, 2)?;

    let if_trace_e_sig_vpm =
        r.f64_list("if_trace.e_sig_vpm", &[0.187, 0.0591, 0.0187])?;
    if if_trace_e_sig_vpm.is_empty() || if_trace_e_sig_vpm.iter().any(|&e| e < 0.0) {
        return Err(Error::Config(format!(
            "{}: need at least one signal field, each ≥ 0 V/m",
            r.loc("if_trace.e_sig_vpm")
        )));
    }
    let if_trace_duration_s = r.positive_f64("if_trace.duration_s", 0.02)?;
    let if_trace_exact = r.boolean("if_trace.exact_envelope", true)?;

    let isolation_e_o_vpm = r.positive_f64("isolation.e_o_vpm", 181e-6)?;
    let isolation_detunings_hz = r.f64_list("isolation.detunings_hz", &[0.1, 1.0, 10.0])?;
    if isolation_detunings_hz.is_empty() || isolation_detunings_hz.iter().any(|&d| d <= 0.0) {
        return Err(Error::Config(format!(
            "{}: need at least one detuning, each > 0 Hz",
            r.loc("isolation.detunings_hz")
        )));
    }
    let isolation_ratio_start_db = r.f64("isolation.ratio_start_db", 0.0)?;
    let isolation_ratio_stop_db = r.f64("isolation.ratio_stop_db", 70.0)?;
    if isolation_ratio_stop_db <= isolation_ratio_start_db {
        return Err(Error::Config(format!(
            "{}: ratio stop must exceed ratio start",
            r.loc("isolation.ratio_stop_db")
        )));
    }
    let isolation_ratio_points = r.usize_min("isolation.ratio_points", 36, 2)?;

    r.reject_unknown()?;

    let canonical = {
        let mut c = r.canonical;
        c.sort_by(|a, b| a.0.cmp(&b.0));
        c
    };
    let config_hash = fnv1a_hash(&canonical);

    Ok(ScenarioConfig {
        transition,
        f_lo_hz,
        f_sig_hz,
        e_lo_vpm,
        phase_lo_rad,
        phase_sig_rad,
        eit,
        link,
        cell_factor,
        losses_db,
        lockin,
        photodiode_gain_v,
        photodiode_dark_v,
        noise_enabled,
        noise_density_v_per_sqrt_hz: noise_density,
        sample_rate_hz,
        seed,
        sweep,
        spectrum_e_fields_vpm,
        spectrum_detuning_span_hz,
        spectrum_points,
        if_trace_e_sig_vpm,
        if_trace_duration_s,
        if_trace_exact,
        isolation_e_o_vpm,
        isolation_detunings_hz,
        isolation_ratio_start_db,
        isolation_ratio_stop_db,
        isolation_ratio_points,
        reproducible: overrides.reproducible,
        config_hash,
        canonical,
    })
}

/// Parses and resolves in one step; `path = None` means pure defaults.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ScenarioConfig> {
    let raw = match path {
        Some(p) => parse_config_file(p)?,
        None => RawConfig::empty(),
    };
    resolve(&raw, overrides)
}
