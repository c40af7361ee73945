use serde::{Deserialize, Serialize};

use super::cfc::cfc_filter;
use super::{SignalError, TimeHistories};
use crate::solver::TerminationReport;
use crate::vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoiConfig {
    pub cfc: f64,
    /// Apply the CFC filter to the wall-force components before taking norms.
    pub filter_force: bool,
    pub filter_accel: bool,
    /// Fraction of the force peak that delimits the impulse window.
    pub threshold: f64,
}

impl Default for QoiConfig {
    fn default() -> Self {
        QoiConfig { cfc: 60.0, filter_force: true, filter_accel: true, threshold: 0.03 }
    }
}

impl QoiConfig {
    /// Signals that are already filtered (or synthetic) pass through untouched.
    pub fn prefiltered() -> Self {
        QoiConfig { filter_force: false, filter_accel: false, ..Self::default() }
    }
}

/// Run-quality diagnostics in percent, plus the screen verdict.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QcDiagnostics {
    pub e_err_pct: f64,
    pub hourglass_pct: f64,
    pub added_mass_pct: f64,
    pub final_time_ms: f64,
    pub pass: bool,
}

impl QcDiagnostics {
    pub fn from_report(report: &TerminationReport, pass: bool) -> Self {
        QcDiagnostics {
            e_err_pct: 100.0 * report.energy_error_max_abs,
            hourglass_pct: 100.0 * report.hourglass_ratio,
            added_mass_pct: 100.0 * report.added_mass_fraction,
            final_time_ms: report.final_time_ms,
            pass,
        }
    }
}

/// Scalar responses of one run. `eta_ke` is a fraction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QoiRecord {
    pub f_wall_max: f64,
    pub e_int_max: f64,
    pub eta_ke: f64,
    pub a_max: f64,
    pub t1: f64,
    pub t2: f64,
    pub t_imp: f64,
    pub w_p_max: f64,
    pub e_kin_0: f64,
    /// The wall force never exceeded zero; `t1 = t2 = 0`.
    pub no_contact: bool,
    pub qc: QcDiagnostics,
}

impl QoiRecord {
    /// True if every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        [
            self.f_wall_max,
            self.e_int_max,
            self.eta_ke,
            self.a_max,
            self.t1,
            self.t2,
            self.t_imp,
            self.w_p_max,
            self.e_kin_0,
            self.qc.e_err_pct,
            self.qc.hourglass_pct,
            self.qc.added_mass_pct,
            self.qc.final_time_ms,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Reduced quantities of interest from the global histories. The QC block is
/// left at its default and filled in by the caller from the solver report.
pub fn extract_qoi(h: &TimeHistories, cfg: &QoiConfig) -> Result<QoiRecord, SignalError> {
    h.validate()?;
    let e_kin_0 = h.e_kin[0];
    if e_kin_0 == 0.0 {
        return Err(SignalError::ZeroInitialKineticEnergy);
    }
    let dt = h.dt().unwrap_or(0.0);

    let force: Vec<f64> = if cfg.filter_force {
        let mut comps = Vec::with_capacity(3);
        for k in 0..3 {
            let ch: Vec<f64> = h.f_wall.iter().map(|f| f[k]).collect();
            comps.push(cfc_filter(&ch, dt, cfg.cfc)?);
        }
        (0..h.len()).map(|i| vec3::norm([comps[0][i], comps[1][i], comps[2][i]])).collect()
    } else {
        h.wall_force_norm()
    };
    let accel = if cfg.filter_accel { cfc_filter(&h.a, dt, cfg.cfc)? } else { h.a.clone() };

    let f_max = max_of(&force);
    let (t1, t2, no_contact) = if f_max > 0.0 {
        let thr = cfg.threshold * f_max;
        let first = force.iter().position(|&f| f > thr).unwrap_or(0);
        let last = force.iter().rposition(|&f| f > thr).unwrap_or(first);
        (h.t[first], h.t[last], false)
    } else {
        (0.0, 0.0, true)
    };
    Ok(QoiRecord {
        f_wall_max: f_max.max(0.0),
        e_int_max: max_of(&h.e_int),
        eta_ke: 1.0 - h.e_kin[h.len() - 1] / e_kin_0,
        a_max: accel.iter().fold(0.0f64, |m, a| m.max(a.abs())),
        t1,
        t2,
        t_imp: t2 - t1,
        w_p_max: max_of(&h.w_p),
        e_kin_0,
        no_contact,
        qc: QcDiagnostics::default(),
    })
}
