//! Cell-factor calibration: AT-splitting field readout, constrained
//! log-log regression, and uncertainty bookkeeping.
//!
//! In the strong-field regime the vapor cell is its own traceable field
//! probe: a measured doublet splitting Δf inverts to
//!
//! ```text
//! E = (λ_p/λ_c) · 2πħ · Δf / ℘
//! ```
//!
//! Pairing those readings with the free-space field from the link budget
//! gives points (E_FF, E_cell) that sit on a line of unit slope in log-log
//! space; the cell factor is the intercept,
//!
//! ```text
//! log C_f = mean( log E_cell − log E_FF )
//! ```
//!
//! The slope is *constrained* to one because C_f is a field ratio at fixed
//! geometry and frequency; a free-slope fit is available purely as a
//! diagnostic for corrupted data sets.

use crate::atoms::{dipole_moment_si, RydbergTransition, HBAR};
use crate::linkbudget::{dbm_to_watts, e_far_field, AntennaLink, CellFactor};
use crate::{Error, Result};
use std::f64::consts::PI;
use std::io::Read;

/// One calibration measurement: link-budget field vs. AT-splitting field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    /// Power into the horn, W.
    pub p_rf_w: f64,
    /// Free-space field from the link budget, V/m.
    pub e_ff_vpm: f64,
    /// Cell field measured by AT splitting, V/m. Strictly positive — only
    /// the AT-resolvable regime calibrates.
    pub e_cell_measured_vpm: f64,
    /// Readings averaged into this point.
    pub n_averages: u32,
    /// Relative standard deviation across those readings.
    pub rel_std: f64,
}

impl CalibrationPoint {
    /// Builds a point with the standard averaging (3 readings, 5% spread).
    pub fn new(p_rf_w: f64, e_ff_vpm: f64, e_cell_measured_vpm: f64) -> Result<Self> {
        Self::with_averaging(p_rf_w, e_ff_vpm, e_cell_measured_vpm, 3, 0.05)
    }

    pub fn with_averaging(
        p_rf_w: f64,
        e_ff_vpm: f64,
        e_cell_measured_vpm: f64,
        n_averages: u32,
        rel_std: f64,
    ) -> Result<Self> {
        if !(p_rf_w >= 0.0) {
            return Err(Error::Domain(format!("RF power must be nonnegative, got {p_rf_w} W")));
        }
        if !(e_ff_vpm > 0.0) {
            return Err(Error::Domain(format!(
                "free-space field must be positive, got {e_ff_vpm} V/m"
            )));
        }
        if !(e_cell_measured_vpm > 0.0) {
            return Err(Error::Domain(format!(
                "measured cell field must be positive, got {e_cell_measured_vpm} V/m \
                 (AT splitting calibrates only resolvable fields)"
            )));
        }
        if n_averages == 0 {
            return Err(Error::Domain("a point must average at least one reading".into()));
        }
        if !(rel_std >= 0.0) {
            return Err(Error::Domain(format!(
                "relative standard deviation must be nonnegative, got {rel_std}"
            )));
        }
        Ok(Self { p_rf_w, e_ff_vpm, e_cell_measured_vpm, n_averages, rel_std })
    }
}

/// Field amplitude from a measured AT splitting: the exact inverse of
/// `atoms::at_splitting`. Δf = Γ_EIT maps back to the minimum resolvable
/// field.
pub fn e_from_at_splitting(delta_f_hz: f64, t: &RydbergTransition) -> f64 {
    assert!(delta_f_hz >= 0.0, "splitting must be nonnegative, got {delta_f_hz} Hz");
    (t.probe_wavelength_m / t.coupling_wavelength_m) * 2.0 * PI * HBAR * delta_f_hz
        / dipole_moment_si(t)
}

/// Unit-slope log-log fit of the cell factor.
///
/// Needs at least two points. The reported `fit_uncertainty` is the relative
/// one-sigma uncertainty of the factor: the standard error of the mean
/// log-ratio, s/√n with s the sample standard deviation of the residuals.
pub fn fit_cell_factor(points: &[CalibrationPoint]) -> Result<CellFactor> {
    let residuals = log_ratios(points, 2)?;
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    CellFactor::new(mean.exp(), (var / n).sqrt())
}

/// Free-slope log-log diagnostic fit: log E_cell = intercept + slope·log E_FF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSlopeFit {
    /// Fitted slope; unity for a clean ratio-law data set.
    pub slope: f64,
    /// exp(intercept): coincides with C_f only when the slope is unity.
    pub factor: f64,
}

/// Unconstrained least squares in log-log space, for spotting data sets that
/// violate the ratio law. Needs at least three points and spread on the
/// field axis.
pub fn fit_cell_factor_free_slope(points: &[CalibrationPoint]) -> Result<FreeSlopeFit> {
    log_ratios(points, 3)?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.e_ff_vpm.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.e_cell_measured_vpm.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "free-slope fit needs spread in the field axis; all E_FF coincide".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    Ok(FreeSlopeFit { slope, factor: (ym - slope * xm).exp() })
}

fn log_ratios(points: &[CalibrationPoint], minimum: usize) -> Result<Vec<f64>> {
    if points.len() < minimum {
        return Err(Error::InsufficientData(format!(
            "cell-factor fit needs at least {minimum} points, got {}",
            points.len()
        )));
    }
    points
        .iter()
        .map(|p| {
            if !(p.e_ff_vpm > 0.0 && p.e_cell_measured_vpm > 0.0) {
                return Err(Error::Domain(format!(
                    "calibration fields must be positive, got E_FF = {} V/m, \
                     E_cell = {} V/m",
                    p.e_ff_vpm, p.e_cell_measured_vpm
                )));
            }
            Ok((p.e_cell_measured_vpm / p.e_ff_vpm).ln())
        })
        .collect()
}

/// Root-sum-square combination of relative uncertainty components.
pub fn combine_uncertainty(rel_components: &[f64]) -> f64 {
    for &c in rel_components {
        assert!(c >= 0.0, "uncertainty components must be nonnegative, got {c}");
    }
    rel_components.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Reads calibration points from CSV. Two layouts are accepted, told apart
/// by the header:
///
/// * `p_rf_dbm,delta_f_hz` — raw measurements; the free-space field comes
///   from the link budget and the cell field from the AT inversion.
/// * `e_ff_vpm,e_cell_vpm` — pre-reduced field pairs.
///
/// Lines starting with `#` are comments.
pub fn read_calibration_csv<R: Read>(
    reader: R,
    link: &AntennaLink,
    transition: &RydbergTransition,
) -> Result<Vec<CalibrationPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Config(format!("unreadable calibration CSV header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let raw_layout = match cols.as_slice() {
        ["p_rf_dbm", "delta_f_hz"] => true,
        ["e_ff_vpm", "e_cell_vpm"] => false,
        other => {
            return Err(Error::Config(format!(
                "unrecognized calibration header {other:?}; expected \
                 p_rf_dbm,delta_f_hz or e_ff_vpm,e_cell_vpm"
            )))
        }
    };
    let mut points = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2; // 1-based, after the header line
        let record =
            record.map_err(|e| Error::Config(format!("calibration CSV row {row}: {e}")))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Config(format!("calibration CSV row {row}: missing column")))?
                .parse::<f64>()
                .map_err(|e| {
                    Error::Config(format!(
                        "calibration CSV row {row}: bad number '{}': {e}",
                        record.get(i).unwrap_or_default()
                    ))
                })
        };
        let (a, b) = (field(0)?, field(1)?);
        let point = if raw_layout {
            let p_w = dbm_to_watts(a);
            CalibrationPoint::new(p_w, e_far_field(p_w, link), e_from_at_splitting(b, transition))
        } else {
            CalibrationPoint::new(0.0, a, b)
        };
        points.push(point.map_err(|e| Error::Config(format!("calibration CSV row {row}: {e}")))?);
    }
    Ok(points)
}
