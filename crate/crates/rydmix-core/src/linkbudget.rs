//! Antenna and propagation arithmetic linking generator power to the field
//! at the vapor cell.
//!
//! The RF source drives a standard-gain horn through a calibrated loss
//! chain; in the far field the radiated field at range R is
//!
//! ```text
//! E_FF = √(59.9585 · P_RF · G) / R
//! ```
//!
//! with P_RF in watts into the horn, G the linear antenna gain, and the
//! numeric constant taken verbatim (not re-derived from the free-space
//! impedance) so field values reproduce digit-for-digit. The vapor cell
//! perturbs the local field; the dimensionless cell factor C_f = E_cell/E_FF
//! absorbs that entire correction:
//!
//! ```text
//! E_cell = C_f · E_FF
//! ```

use crate::{Error, Result};
use std::io::Write;

/// Far-field power-to-field coefficient, used verbatim.
pub const FAR_FIELD_COEFFICIENT: f64 = 59.9585;

/// Horn antenna and measurement geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaLink {
    /// Antenna gain, dB.
    pub gain_db: f64,
    /// Gain calibration uncertainty, dB; propagated by calibration fits,
    /// not here.
    pub gain_uncertainty_db: f64,
    /// Horn-to-cell distance R, m. Strictly positive.
    pub distance_r_m: f64,
    /// Horn aperture diagonal a, m. Strictly positive.
    pub aperture_diagonal_a_m: f64,
    /// RF wavelength λ, m. Strictly positive.
    pub rf_wavelength_m: f64,
}

impl AntennaLink {
    pub fn new(
        gain_db: f64,
        gain_uncertainty_db: f64,
        distance_r_m: f64,
        aperture_diagonal_a_m: f64,
        rf_wavelength_m: f64,
    ) -> Result<Self> {
        if !(distance_r_m > 0.0) {
            return Err(Error::Domain(format!(
                "antenna distance must be positive, got {distance_r_m} m"
            )));
        }
        if !(aperture_diagonal_a_m > 0.0) {
            return Err(Error::Domain(format!(
                "aperture diagonal must be positive, got {aperture_diagonal_a_m} m"
            )));
        }
        if !(rf_wavelength_m > 0.0) {
            return Err(Error::Domain(format!(
                "RF wavelength must be positive, got {rf_wavelength_m} m"
            )));
        }
        Ok(Self {
            gain_db,
            gain_uncertainty_db,
            distance_r_m,
            aperture_diagonal_a_m,
            rf_wavelength_m,
        })
    }

    /// Linear antenna gain 10^(G_dB/10).
    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.gain_db / 10.0)
    }

    /// Advisory check that the cell sits beyond the far-field distance.
    /// Near-field operation is allowed knowingly, so this never errors.
    pub fn near_field_warning(&self) -> Option<String> {
        let ff = far_field_distance(self);
        if self.distance_r_m < ff {
            Some(format!(
                "cell distance {} m is inside the far-field distance {ff:.4} m; \
                 the radiated-field formula is unreliable here",
                self.distance_r_m
            ))
        } else {
            None
        }
    }
}

impl Default for AntennaLink {
    /// The measurement geometry: 15.55 ± 0.4 dB horn at R = 385 mm, aperture
    /// diagonal 48.28 mm, λ = 15.286 mm.
    fn default() -> Self {
        Self {
            gain_db: 15.55,
            gain_uncertainty_db: 0.4,
            distance_r_m: 0.385,
            aperture_diagonal_a_m: 0.04828,
            rf_wavelength_m: 0.015286,
        }
    }
}

/// Generator power followed by a chain of passive losses.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerChain {
    pub generator_power_dbm: f64,
    /// Cable and attenuator losses, dB, each nonnegative.
    pub losses_db: Vec<f64>,
}

impl PowerChain {
    pub fn new(generator_power_dbm: f64, losses_db: Vec<f64>) -> Result<Self> {
        if let Some(bad) = losses_db.iter().find(|&&l| !(l >= 0.0)) {
            return Err(Error::Domain(format!(
                "chain losses must be nonnegative, got {bad} dB"
            )));
        }
        Ok(Self { generator_power_dbm, losses_db })
    }
}

/// The dimensionless cell perturbation factor C_f = E_cell/E_FF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFactor {
    pub value: f64,
    /// One-sigma relative uncertainty from the calibration fit.
    pub fit_uncertainty: f64,
}

impl CellFactor {
    pub fn new(value: f64, fit_uncertainty: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::Domain(format!("cell factor must be positive, got {value}")));
        }
        if !(fit_uncertainty >= 0.0) {
            return Err(Error::Domain(format!(
                "cell factor uncertainty must be nonnegative, got {fit_uncertainty}"
            )));
        }
        Ok(Self { value, fit_uncertainty })
    }
}

impl Default for CellFactor {
    /// The measured value 0.90; uncertainty is supplied by calibration fits.
    fn default() -> Self {
        Self { value: 0.90, fit_uncertainty: 0.0 }
    }
}

/// dBm to watts: P_W = 10^((p − 30)/10).
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Watts to dBm; errors on non-positive power.
pub fn watts_to_dbm(p_watts: f64) -> Result<f64> {
    if !(p_watts > 0.0) {
        return Err(Error::Domain(format!(
            "power must be positive to express in dBm, got {p_watts} W"
        )));
    }
    Ok(10.0 * p_watts.log10() + 30.0)
}

/// Power delivered past the loss chain: generator − Σ losses, dBm.
pub fn chain_output_dbm(c: &PowerChain) -> f64 {
    c.generator_power_dbm - c.losses_db.iter().sum::<f64>()
}

/// Far-field distance 2a²/λ, m.
pub fn far_field_distance(link: &AntennaLink) -> f64 {
    2.0 * link.aperture_diagonal_a_m * link.aperture_diagonal_a_m / link.rf_wavelength_m
}

/// Free-space field at the cell position: √(59.9585·P·G)/R, V/m.
///
/// Valid beyond the far-field distance; check
/// [`AntennaLink::near_field_warning`] when exploring close geometries.
pub fn e_far_field(p_rf_watts: f64, link: &AntennaLink) -> f64 {
    assert!(p_rf_watts >= 0.0, "radiated power must be nonnegative, got {p_rf_watts} W");
    (FAR_FIELD_COEFFICIENT * p_rf_watts * link.gain_linear()).sqrt() / link.distance_r_m
}

/// Field inside the vapor cell: C_f · E_FF, V/m.
pub fn e_cell(p_rf_watts: f64, link: &AntennaLink, cf: &CellFactor) -> f64 {
    cf.value * e_far_field(p_rf_watts, link)
}

/// Horn input power, dBm, that produces a given cell field — the algebraic
/// inverse of [`e_cell`]. Errors on a non-positive target field.
pub fn power_for_e_cell(e_cell_vpm: f64, link: &AntennaLink, cf: &CellFactor) -> Result<f64> {
    if !(e_cell_vpm > 0.0) {
        return Err(Error::Domain(format!(
            "target cell field must be positive, got {e_cell_vpm} V/m"
        )));
    }
    let e_ff = e_cell_vpm / cf.value;
    let scaled = e_ff * link.distance_r_m;
    watts_to_dbm(scaled * scaled / (FAR_FIELD_COEFFICIENT * link.gain_linear()))
}

/// One row of the power-to-field table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetRow {
    pub p_dbm: f64,
    pub p_watts: f64,
    pub e_ff_vpm: f64,
    pub e_cell_vpm: f64,
}

/// Evaluates the chain for a list of horn input powers.
pub fn linkbudget_rows(
    powers_dbm: &[f64],
    link: &AntennaLink,
    cf: &CellFactor,
) -> Vec<LinkBudgetRow> {
    powers_dbm
        .iter()
        .map(|&p_dbm| {
            let p_watts = dbm_to_watts(p_dbm);
            let e_ff_vpm = e_far_field(p_watts, link);
            LinkBudgetRow { p_dbm, p_watts, e_ff_vpm, e_cell_vpm: cf.value * e_ff_vpm }
        })
        .collect()
}

/// Writes `p_dbm,p_watts,e_ff_vpm,e_cell_vpm` CSV with optional comments.
pub fn write_linkbudget_csv<W: Write>(
    rows: &[LinkBudgetRow],
    out: &mut W,
    comments: &[String],
) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "p_dbm,p_watts,e_ff_vpm,e_cell_vpm")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.p_dbm, r.p_watts, r.e_ff_vpm, r.e_cell_vpm)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn dbm_decades() {
        assert!(rel(dbm_to_watts(0.0), 1e-3) < 1e-12);
        assert!(rel(dbm_to_watts(-40.0), 1e-7) < 1e-12);
        assert!(rel(dbm_to_watts(-180.0), 1e-21) < 1e-12, "attenuated floor regime");
        assert!(rel(dbm_to_watts(30.0), 1.0) < 1e-12);
    }

    #[test]
    fn dbm_round_trip() {
        let mut p = -200.0;
        while p <= 30.0 {
            let back = watts_to_dbm(dbm_to_watts(p)).unwrap();
            assert!((back - p).abs() < 1e-12 * p.abs().max(1.0), "{p} dBm -> {back}");
            p += 0.37;
        }
        assert!(watts_to_dbm(0.0).is_err());
        assert!(watts_to_dbm(-1e-3).is_err());
    }

    #[test]
    fn chain_arithmetic() {
        let direct = PowerChain::new(-60.0, vec![111.0]).unwrap();
        assert_eq!(chain_output_dbm(&direct), -171.0);
        let split = PowerChain::new(-60.0, vec![50.0, 61.0]).unwrap();
        assert_eq!(chain_output_dbm(&split), chain_output_dbm(&direct));
        let bare = PowerChain::new(-12.5, vec![]).unwrap();
        assert_eq!(chain_output_dbm(&bare), -12.5);
        assert!(PowerChain::new(0.0, vec![3.0, -1.0]).is_err());
    }

    #[test]
    fn far_field_distance_reference_geometry() {
        let link = AntennaLink::default();
        let d = far_field_distance(&link);
        assert!((d - 0.305).abs() < 1e-3, "2a^2/lambda = {d} m");
        // The default 385 mm standoff is safely beyond it.
        assert!(link.near_field_warning().is_none());
        let close = AntennaLink { distance_r_m: 0.2, ..link.clone() };
        assert!(close.near_field_warning().is_some());
        // Quadratic in aperture, trivial case a = lambda = 1.
        let halved = AntennaLink { aperture_diagonal_a_m: 0.02414, ..link };
        assert!(rel(far_field_distance(&halved), d / 4.0) < 1e-12);
        let unit = AntennaLink::new(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(far_field_distance(&unit), 2.0);
    }

    #[test]
    fn far_field_reference_point() {
        let link = AntennaLink::default();
        assert_eq!(e_far_field(0.0, &link), 0.0);
        let e = e_far_field(1e-7, &link);
        assert!(rel(e, 0.038103) < 1e-3, "E_FF at -40 dBm = {e} V/m");
        assert!((e - 0.0381).abs() < 2e-4);
    }

    #[test]
    fn far_field_scalings() {
        let link = AntennaLink::default();
        let e1 = e_far_field(2.5e-9, &link);
        // Square-root power scaling.
        assert!(rel(e_far_field(4.0 * 2.5e-9, &link), 2.0 * e1) < 1e-12);
        assert!(rel(e_far_field(9.0 * 2.5e-9, &link), 3.0 * e1) < 1e-12);
        // E x R independent of the standoff (up to final-op rounding).
        let product = e1 * link.distance_r_m;
        for &r in &[0.1, 0.385, 1.0, 7.3] {
            let moved = AntennaLink { distance_r_m: r, ..link.clone() };
            assert!(rel(e_far_field(2.5e-9, &moved) * r, product) < 1e-14);
        }
    }

    #[test]
    fn cell_field_reference_points() {
        let link = AntennaLink::default();
        let cf = CellFactor::default();
        let e = e_cell(1e-7, &link, &cf);
        assert!((e - 0.0343).abs() < 5e-5, "E_cell at -40 dBm = {e} V/m");
        // Identity cell reduces to the free-space field.
        let unity = CellFactor::new(1.0, 0.0).unwrap();
        assert_eq!(e_cell(1e-7, &link, &unity), e_far_field(1e-7, &link));
        // The ratio is the factor itself for any power (final-op rounding).
        for &p in &[1e-13, 1e-10, 1e-7, 1e-3] {
            assert!(rel(e_cell(p, &link, &cf) / e_far_field(p, &link), 0.90) < 1e-15);
        }
    }

    #[test]
    fn inverse_power_reference_points() {
        let link = AntennaLink::default();
        let cf = CellFactor::default();
        // The noise-knee field sits near -97.45 dBm at the horn.
        let p = power_for_e_cell(46e-6, &link, &cf).unwrap();
        assert!((p + 97.45).abs() < 0.01, "46 uV/m needs {p} dBm");
        // The in-tune reference level used by the isolation study.
        let p = power_for_e_cell(181e-6, &link, &cf).unwrap();
        assert!((p + 85.6).abs() < 0.1, "181 uV/m needs {p} dBm");
        // Round trip through the forward formula.
        for &e in &[1e-6, 46e-6, 181e-6, 0.03, 1.7] {
            let p = power_for_e_cell(e, &link, &cf).unwrap();
            assert!(rel(e_cell(dbm_to_watts(p), &link, &cf), e) < 1e-12);
        }
        assert!(power_for_e_cell(0.0, &link, &cf).is_err());
    }

    #[test]
    fn validation() {
        assert!(AntennaLink::new(15.0, 0.4, 0.0, 0.05, 0.015).is_err());
        assert!(AntennaLink::new(15.0, 0.4, 0.385, -0.05, 0.015).is_err());
        assert!(AntennaLink::new(15.0, 0.4, 0.385, 0.05, 0.0).is_err());
        assert!(CellFactor::new(0.0, 0.0).is_err());
        assert!(CellFactor::new(0.9, -0.1).is_err());
    }

    #[test]
    fn table_and_csv() {
        let link = AntennaLink::default();
        let cf = CellFactor::default();
        let rows = linkbudget_rows(&[-40.0, -60.0], &link, &cf);
        assert_eq!(rows.len(), 2);
        assert!(rel(rows[0].p_watts, 1e-7) < 1e-12);
        assert!(rel(rows[1].e_ff_vpm, rows[0].e_ff_vpm / 10.0) < 1e-12, "-20 dB is 10x in field");
        let mut buf = Vec::new();
        write_linkbudget_csv(&rows, &mut buf, &["geometry = default".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# geometry = default\np_dbm,p_watts,e_ff_vpm,e_cell_vpm\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().starts_with("-40,"));
    }
}
