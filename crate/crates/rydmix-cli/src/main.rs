//! `rydmix` — command-line front end for the Rydberg-atom RF mixer
//! simulation toolkit.
//!
//! Every subcommand resolves one layered configuration (built-in defaults
//! ← `--config` file ← command-line flags), runs a scenario from the core
//! library, and writes metadata-stamped CSV into `--out`.
//!
//! Exit codes: 0 success, 2 configuration/domain error, 3 numerical
//! failure, 1 other runtime failure (I/O, unit mismatch).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rydmix_core::calibration::{
    fit_cell_factor, fit_cell_factor_free_slope, read_calibration_csv,
};
use rydmix_core::linkbudget::{far_field_distance, linkbudget_rows, write_linkbudget_csv};
use rydmix_core::lockin::CutoffConvention;
use rydmix_core::scenarios::config::{
    parse_config_file, resolve, Overrides, RawConfig, ScenarioConfig,
};
use rydmix_core::scenarios::runs::{
    run_if_trace, run_isolation_sweep, run_spectrum, run_weak_field_sweep, RunMetadata,
};
use rydmix_core::scenarios::{calibrate_noise_density, NoiseCalibration};
use rydmix_core::Error;

#[derive(Parser)]
#[command(
    name = "rydmix",
    version,
    about = "Simulates a Rydberg-atom RF mixer detection chain and writes CSV data sets",
    long_about = "Simulates a Rydberg-atom RF mixer weak-field detection chain: \
EIT/AT spectra, IF photodiode traces, weak-field detection sweeps with regime \
flagging, neighboring-signal isolation curves, antenna link budgets, and \
cell-factor calibration. All outputs are CSV files stamped with the resolved \
configuration."
)]
struct Cli {
    /// Flat `section.key = value` config file (UTF-8, `#` comments);
    /// omitted keys fall back to built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base RNG seed; overrides `sim.seed` from the config file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Directory CSV outputs are written into (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Suppress the timestamp comment so reruns are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,

    /// Low-pass cutoff reporting convention: inv-2pi-tau (f_c = 1/(2πτ))
    /// or inv-tau (f_c = 1/τ). Overrides `lockin.fc_convention`.
    #[arg(long, global = true, value_name = "CONV", value_parser = parse_convention)]
    fc_convention: Option<CutoffConvention>,

    /// Override one transition parameter, e.g.
    /// `--transition eit_linewidth_hz=5e6` (repeatable); equivalent to
    /// setting `transition.<key>` in the config file, but outranks it.
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    transition: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmission vs. coupling detuning for each configured RF field
    /// (`spectrum_NN.csv`): the single-peak to split-peak transition.
    Spectrum,

    /// Field-envelope and photodiode time traces at the intermediate
    /// frequency for each configured signal field
    /// (`if_envelope_NN.csv`, `if_photodiode_NN.csv`).
    IfTrace,

    /// Weak-field detection sweep (`weakfield_sweep.csv`): lock-in
    /// response vs. signal field with noise-floor / AT-rolloff /
    /// exceeds-LO regime flags.
    SweepWeakfield,

    /// Neighboring-signal isolation study (`isolation_df_<Δf>hz.csv` per
    /// detuning plus `isolation_crossings.csv`): interferer leakage
    /// normalized to the in-tune response, with −3 dB crossing ratios.
    Isolation,

    /// Power-to-field table (`linkbudget.csv`): horn power in dBm and
    /// watts, far-field strength, and the field inside the cell, for the
    /// configured sweep grid read as generator dBm.
    Linkbudget,

    /// Fit the cell factor from measured calibration points
    /// (`calibration_fit.csv`).
    Calibrate {
        /// Input CSV: either `p_rf_dbm,delta_f_hz` raw measurements or
        /// `e_ff_vpm,e_cell_vpm` pre-reduced field pairs.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },

    /// Calibrate the photodiode noise density so the zero-signal floor
    /// equals the response at a target field (`noise_calibration.csv`).
    CalibrateNoise {
        /// Field whose lock-in response defines the floor, V/m.
        #[arg(long, value_name = "V_PER_M", default_value_t = 46e-6)]
        target_e_vpm: f64,

        /// Zero-signal repetitions per floor estimate.
        #[arg(long, value_name = "N", default_value_t = 64)]
        reps: usize,
    },
}

fn parse_convention(s: &str) -> Result<CutoffConvention, String> {
    CutoffConvention::parse(s).map_err(|e| e.to_string())
}

/// Writes one line to stdout. A consumer that closes the pipe early
/// (`rydmix linkbudget | head`) ends the run quietly, mirroring the default
/// SIGPIPE disposition, instead of panicking mid-write.
fn say_line(line: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(line).and_then(|()| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

macro_rules! say {
    ($($arg:tt)*) => { say_line(format_args!($($arg)*)) };
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::InsufficientData(_) => 2,
        Error::Numerical(_) => 3,
        Error::Io(_) | Error::UnitMismatch { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> rydmix_core::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        fc_convention: cli.fc_convention,
        reproducible: cli.reproducible,
    };
    let mut raw = match &cli.config {
        Some(path) => parse_config_file(path)?,
        None => RawConfig::empty(),
    };
    for pair in &cli.transition {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::Config(format!(
                "--transition expects key=value, got `{pair}`"
            )));
        };
        raw.set(&format!("transition.{}", key.trim()), value)?;
    }
    let cfg = resolve(&raw, &overrides)?;

    match cli.command {
        Command::Spectrum => announce(&run_spectrum(&cfg, &cli.out)?),
        Command::IfTrace => announce(&run_if_trace(&cfg, &cli.out)?),
        Command::SweepWeakfield => {
            let sweep = run_weak_field_sweep(&cfg)?;
            let flagged = sweep
                .rows
                .iter()
                .filter(|r| r.flag != rydmix_core::scenarios::runs::RegimeFlag::Ok)
                .count();
            say!(
                "{} points, {} flagged; zero-signal floor mean {} V",
                sweep.rows.len(),
                flagged,
                sweep.floor.mean_v
            );
            announce(&[sweep.write_csv(&cli.out)?]);
        }
        Command::Isolation => {
            let result = run_isolation_sweep(&cfg)?;
            for curve in &result.curves {
                match curve.crossing_ratio_db {
                    Some(c) => say!(
                        "detuning {} Hz: -3 dB crossing at ratio {c:.2} dB",
                        curve.detuning_hz
                    ),
                    None => say!(
                        "detuning {} Hz: leak stays below -3 dB across the sweep",
                        curve.detuning_hz
                    ),
                }
            }
            announce(&result.write_csv(&cli.out)?);
        }
        Command::Linkbudget => run_linkbudget(&cfg, &cli.out)?,
        Command::Calibrate { input } => run_calibrate(&cfg, &input, &cli.out)?,
        Command::CalibrateNoise { target_e_vpm, reps } => {
            let cal = calibrate_noise_density(&cfg, target_e_vpm, reps)?;
            print_noise_calibration(&cal);
            announce(&[write_noise_calibration(&cfg, &cal, &cli.out)?]);
        }
    }
    Ok(())
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        say!("wrote {}", p.display());
    }
}

fn create_output(dir: &Path, name: &str) -> rydmix_core::Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

/// Power-to-field table over the sweep grid. The grid is always read as
/// generator power in dBm here (configured losses map it to the horn),
/// regardless of `sweep.variable` — this subcommand is the power chain.
fn run_linkbudget(cfg: &ScenarioConfig, out_dir: &Path) -> rydmix_core::Result<()> {
    let horn_dbm: Vec<f64> = cfg
        .sweep
        .values()
        .iter()
        .map(|&generator_dbm| cfg.horn_power_dbm(generator_dbm))
        .collect();
    let rows = linkbudget_rows(&horn_dbm, &cfg.link, &cfg.cell_factor);

    let mut extra = vec![
        ("p_dbm_reference".to_string(), "horn input, after configured losses".to_string()),
        ("far_field_distance_m".to_string(), format!("{}", far_field_distance(&cfg.link))),
    ];
    if let Some(warning) = cfg.link.near_field_warning() {
        extra.push(("warning".to_string(), warning));
    }
    let extra_refs: Vec<(&str, String)> =
        extra.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let comments = RunMetadata::from_config(cfg).comment_lines(&extra_refs);

    // The table goes to stdout as well as to the CSV file.
    say!("p_dbm,p_watts,e_ff_vpm,e_cell_vpm");
    for r in &rows {
        say!("{},{},{},{}", r.p_dbm, r.p_watts, r.e_ff_vpm, r.e_cell_vpm);
    }

    let (path, mut file) = create_output(out_dir, "linkbudget.csv")?;
    write_linkbudget_csv(&rows, &mut file, &comments)?;
    file.flush()?;
    announce(&[path]);
    Ok(())
}

fn run_calibrate(
    cfg: &ScenarioConfig,
    input: &Path,
    out_dir: &Path,
) -> rydmix_core::Result<()> {
    let file = File::open(input).map_err(|e| {
        Error::Config(format!("cannot read calibration CSV `{}`: {e}", input.display()))
    })?;
    let points = read_calibration_csv(file, &cfg.link, &cfg.transition)?;
    let fit = fit_cell_factor(&points)?;

    say!("c_f = {}", fit.value);
    say!("fit_uncertainty = {}", fit.fit_uncertainty);
    say!("n_points = {}", points.len());

    let mut extra = vec![("input".to_string(), input.display().to_string())];
    // Unconstrained fit as a ratio-law diagnostic; needs ≥3 points.
    if let Ok(free) = fit_cell_factor_free_slope(&points) {
        extra.push(("free_slope".to_string(), format!("{}", free.slope)));
        extra.push(("free_slope_factor".to_string(), format!("{}", free.factor)));
        say!("free_slope = {} (unity for a clean ratio law)", free.slope);
    }
    let extra_refs: Vec<(&str, String)> =
        extra.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let comments = RunMetadata::from_config(cfg).comment_lines(&extra_refs);

    let (path, mut out) = create_output(out_dir, "calibration_fit.csv")?;
    for line in &comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "c_f,fit_uncertainty,n_points")?;
    writeln!(out, "{},{},{}", fit.value, fit.fit_uncertainty, points.len())?;
    out.flush()?;
    announce(&[path]);
    Ok(())
}

fn print_noise_calibration(cal: &NoiseCalibration) {
    say!("density_v_per_sqrt_hz = {}", cal.density_v_per_sqrt_hz);
    say!("target_e_cell_vpm = {}", cal.target_e_cell_vpm);
    say!("target_r_v = {}", cal.target_r_v);
    say!("floor_mean_v = {}", cal.floor_mean_v);
    say!("reps = {}", cal.reps);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_the_error_space() {
        assert_eq!(exit_code_for(&Error::Config("k".into())), 2);
        assert_eq!(exit_code_for(&Error::Domain("d".into())), 2);
        assert_eq!(exit_code_for(&Error::InsufficientData("n".into())), 2);
        assert_eq!(exit_code_for(&Error::Numerical("nan".into())), 3);
        assert_eq!(
            exit_code_for(&Error::UnitMismatch { expected: "volts", got: "value" }),
            1
        );
        assert_eq!(
            exit_code_for(&Error::Io(std::io::Error::other("disk"))),
            1
        );
    }
}

fn write_noise_calibration(
    cfg: &ScenarioConfig,
    cal: &NoiseCalibration,
    out_dir: &Path,
) -> rydmix_core::Result<PathBuf> {
    let comments = RunMetadata::from_config(cfg).comment_lines(&[]);
    let (path, mut out) = create_output(out_dir, "noise_calibration.csv")?;
    for line in &comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(
        out,
        "density_v_per_sqrt_hz,target_e_cell_vpm,target_r_v,floor_mean_v,reps"
    )?;
    writeln!(
        out,
        "{},{},{},{},{}",
        cal.density_v_per_sqrt_hz,
        cal.target_e_cell_vpm,
        cal.target_r_v,
        cal.floor_mean_v,
        cal.reps
    )?;
    out.flush()?;
    Ok(path)
}
