//! Crash-signal post-processing: CFC60 filtering, reduced quantities of
//! interest and the automated run-quality screen.

mod cfc;
mod qoi;
mod screen;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cfc::{cfc_coefficients, cfc_filter, cfc60, CfcCoefficients};
pub use qoi::{extract_qoi, QcDiagnostics, QoiConfig, QoiRecord};
pub use screen::{quality_screen, QcThresholds, ScreenReason};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("signal needs at least {min} samples, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("sample interval {dt_ms} ms is invalid for CFC {cfc}")]
    BadSampling { dt_ms: f64, cfc: f64 },
    #[error("initial kinetic energy is zero; absorption fraction undefined")]
    ZeroInitialKineticEnergy,
    #[error("invalid histories: {0}")]
    InvalidHistories(String),
}

/// Uniformly sampled global history channels of one run. Energies in kJ,
/// wall reaction in kN (summed over walls), rigid-body acceleration along the
/// impact axis in mm/ms².
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeHistories {
    pub t: Vec<f64>,
    pub f_wall: Vec<[f64; 3]>,
    pub e_kin: Vec<f64>,
    pub e_int: Vec<f64>,
    pub e_cont: Vec<f64>,
    pub e_hg: Vec<f64>,
    pub w_p: Vec<f64>,
    pub a: Vec<f64>,
}

impl TimeHistories {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Uniform sample interval, or `None` for fewer than two samples.
    pub fn dt(&self) -> Option<f64> {
        (self.t.len() >= 2).then(|| self.t[1] - self.t[0])
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let n = self.t.len();
        let lens = [
            self.f_wall.len(),
            self.e_kin.len(),
            self.e_int.len(),
            self.e_cont.len(),
            self.e_hg.len(),
            self.w_p.len(),
            self.a.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(SignalError::InvalidHistories("channel lengths differ".into()));
        }
        if n == 0 {
            return Err(SignalError::InvalidHistories("no samples".into()));
        }
        if let Some(dt) = self.dt() {
            if !(dt > 0.0) {
                return Err(SignalError::InvalidHistories("time grid not increasing".into()));
            }
            for (k, w) in self.t.windows(2).enumerate() {
                if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                    return Err(SignalError::InvalidHistories(format!("non-uniform time step at sample {k}")));
                }
            }
        }
        Ok(())
    }

    /// True if every channel value is finite.
    pub fn all_finite(&self) -> bool {
        self.t.iter().all(|x| x.is_finite())
            && self.f_wall.iter().all(|f| f.iter().all(|x| x.is_finite()))
            && [&self.e_kin, &self.e_int, &self.e_cont, &self.e_hg, &self.w_p, &self.a]
                .iter()
                .all(|ch| ch.iter().all(|x| x.is_finite()))
    }

    pub fn wall_force_norm(&self) -> Vec<f64> {
        self.f_wall.iter().map(|f| crate::vec3::norm(*f)).collect()
    }
}
