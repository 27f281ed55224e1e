//! End-to-end tests of the `rydmix` binary: subcommand wiring, exit
//! codes, configuration layering, and byte-reproducible outputs. All runs
//! use desk-scale lock-in settings so the whole file stays fast.

use std::path::Path;
use std::process::{Command, Output};

fn rydmix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydmix"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary spawns")
}

fn write_desk_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("desk.cfg");
    std::fs::write(
        &path,
        format!("lockin.tau_s = 0.05\nsim.sample_rate_hz = 400e3\n{extra}"),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "lockin.tua_s = 3\n");
    let out = rydmix(&["--config", &cfg, "spectrum"], dir.path());
    assert_eq!(out.status.code(), Some(2), "config errors exit 2");
    let err = stderr_of(&out);
    assert!(err.contains("lockin.tua_s"), "stderr names the key: {err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydmix(&["no-such-subcommand"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rydmix(&["--transition", "missing-equals", "spectrum"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("key=value"));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydmix(&["--config", "does/not/exist.cfg", "spectrum"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("exist.cfg"));
}

#[test]
fn every_subcommand_produces_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(
        dir.path(),
        "noise.enabled = false\nsweep.variable = e_sig_vpm\nsweep.start = 1e-4\n\
         sweep.stop = 1e-3\nsweep.points = 3\nspectrum.e_fields_vpm = 0,0.72\n\
         spectrum.points = 51\nisolation.detunings_hz = 5\n\
         isolation.ratio_stop_db = 30\nisolation.ratio_points = 4\n",
    );
    for (args, files) in [
        (vec!["spectrum"], vec!["spectrum_00.csv", "spectrum_01.csv"]),
        (vec!["sweep-weakfield"], vec!["weakfield_sweep.csv"]),
        (
            vec!["isolation"],
            vec!["isolation_df_5hz.csv", "isolation_crossings.csv"],
        ),
        (vec!["linkbudget"], vec!["linkbudget.csv"]),
    ] {
        let mut full = vec!["--config", cfg.as_str(), "--out", "data"];
        full.extend(args.iter().copied());
        let out = rydmix(&full, dir.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?} failed: {}",
            stderr_of(&out)
        );
        for f in files {
            assert!(dir.path().join("data").join(f).exists(), "{f} missing after {args:?}");
        }
    }
}

#[test]
fn if_trace_needs_the_full_sample_rate() {
    // 400 kHz cannot render a 90 kHz intermediate frequency; the dedicated
    // trace config bumps the rate and produces both trace kinds.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.cfg");
    std::fs::write(
        &path,
        "sim.sample_rate_hz = 2e6\nif_trace.duration_s = 5e-4\n\
         if_trace.e_sig_vpm = 0.187,0.0187\nnoise.enabled = false\n",
    )
    .unwrap();
    let out = rydmix(
        &["--config", path.to_str().unwrap(), "--out", "data", "if-trace"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for f in [
        "if_envelope_00.csv",
        "if_photodiode_00.csv",
        "if_envelope_01.csv",
        "if_photodiode_01.csv",
    ] {
        assert!(dir.path().join("data").join(f).exists());
    }
}

#[test]
fn reproducible_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(
        dir.path(),
        "sweep.variable = e_sig_vpm\nsweep.start = 1e-5\nsweep.stop = 1e-4\n\
         sweep.points = 3\nsweep.floor_reps = 4\nnoise.density_v_per_sqrt_hz = 1e-5\n",
    );
    for out_dir in ["a", "b"] {
        let out = rydmix(
            &[
                "--config",
                &cfg,
                "--out",
                out_dir,
                "--reproducible",
                "--seed",
                "7",
                "sweep-weakfield",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    let a = std::fs::read(dir.path().join("a/weakfield_sweep.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/weakfield_sweep.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same seed, same bytes");
}

#[test]
fn seed_flag_changes_noisy_output_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(
        dir.path(),
        "sweep.variable = e_sig_vpm\nsweep.start = 1e-5\nsweep.stop = 1e-4\n\
         sweep.points = 2\nsweep.floor_reps = 4\nnoise.density_v_per_sqrt_hz = 1e-5\n",
    );
    let mut texts = Vec::new();
    for (out_dir, seed) in [("s1", "7"), ("s2", "8")] {
        let out = rydmix(
            &[
                "--config", &cfg, "--out", out_dir, "--reproducible", "--seed", seed,
                "sweep-weakfield",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
        texts.push(
            std::fs::read_to_string(
                dir.path().join(out_dir).join("weakfield_sweep.csv"),
            )
            .unwrap(),
        );
    }
    assert!(texts[0].contains("# seed = 7"));
    assert!(texts[1].contains("# seed = 8"));
    assert_ne!(texts[0], texts[1], "different seeds draw different noise");
}

#[test]
fn transition_flag_overrides_the_config_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "spectrum.e_fields_vpm = 0.72\nspectrum.points = 21\n");
    let out = rydmix(
        &[
            "--config",
            &cfg,
            "--out",
            "data",
            "--transition",
            "eit_linewidth_hz=8e6",
            "spectrum",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text =
        std::fs::read_to_string(dir.path().join("data/spectrum_00.csv")).unwrap();
    assert!(
        text.contains("# transition.eit_linewidth_hz = 8000000"),
        "override lands in the metadata echo"
    );
}

#[test]
fn fc_convention_flag_is_reflected_in_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "spectrum.e_fields_vpm = 0\nspectrum.points = 11\n");
    let out = rydmix(
        &["--config", &cfg, "--out", "data", "--fc-convention", "inv-tau", "spectrum"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text =
        std::fs::read_to_string(dir.path().join("data/spectrum_00.csv")).unwrap();
    assert!(text.contains("# fc_convention = inv-tau"));
}

#[test]
fn calibrate_recovers_a_known_cell_factor_in_both_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "");

    // Pre-reduced pairs with an exact 0.9 ratio.
    let pairs = dir.path().join("pairs.csv");
    let mut text = String::from("e_ff_vpm,e_cell_vpm\n");
    for i in 1..=6 {
        let e_ff = 0.1 * i as f64;
        text.push_str(&format!("{},{}\n", e_ff, 0.9 * e_ff));
    }
    std::fs::write(&pairs, text).unwrap();
    let out = rydmix(
        &["--config", &cfg, "--out", "data", "calibrate", "--input",
          pairs.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let c_f: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("c_f = "))
        .expect("record printed")
        .parse()
        .unwrap();
    assert!((c_f - 0.9).abs() < 1e-10, "noiseless fit is exact, got {c_f}");
    assert!(stdout.contains("n_points = 6"));
    assert!(stdout.contains("free_slope = "), "ratio-law diagnostic printed");
    assert!(dir.path().join("data/calibration_fit.csv").exists());

    // Raw measurements: powers plus AT splittings consistent with the
    // same 0.9 ratio, reduced through the default link budget.
    let defaults = rydmix_core::scenarios::config::resolve(
        &rydmix_core::scenarios::config::RawConfig::empty(),
        &rydmix_core::scenarios::config::Overrides::default(),
    )
    .unwrap();
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("p_rf_dbm,delta_f_hz\n");
    for p_dbm in [-10.0, -5.0, 0.0, 5.0] {
        let p_w = rydmix_core::linkbudget::dbm_to_watts(p_dbm);
        let e_ff = rydmix_core::linkbudget::e_far_field(p_w, &defaults.link);
        let delta_f =
            rydmix_core::atoms::at_splitting(0.9 * e_ff, &defaults.transition).unwrap();
        text.push_str(&format!("{},{}\n", p_dbm, delta_f));
    }
    std::fs::write(&raw, text).unwrap();
    let out = rydmix(
        &["--config", &cfg, "--out", "data2", "calibrate", "--input",
          raw.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let c_f: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("c_f = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((c_f - 0.9).abs() < 1e-10, "raw layout reduces to the same fit: {c_f}");
}

#[test]
fn calibrate_rejects_a_missing_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "");
    let out = rydmix(
        &["--config", &cfg, "calibrate", "--input", "nowhere.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "missing input file is a config error");
    assert!(stderr_of(&out).contains("nowhere.csv"));
}

#[test]
fn calibrate_noise_pins_the_floor_and_reports_the_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_desk_config(dir.path(), "");
    let out = rydmix(
        &[
            "--config", &cfg, "--out", "data", "--reproducible", "calibrate-noise",
            "--target-e-vpm", "46e-6", "--reps", "4",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let density: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("density_v_per_sqrt_hz = "))
        .expect("density printed")
        .parse()
        .unwrap();
    assert!(density > 0.0);
    let csv =
        std::fs::read_to_string(dir.path().join("data/noise_calibration.csv")).unwrap();
    assert!(csv.contains("density_v_per_sqrt_hz,target_e_cell_vpm,target_r_v,floor_mean_v,reps"));
}
