use serde::{Deserialize, Serialize};

use super::TimeHistories;
use crate::solver::{TerminationCause, TerminationReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcThresholds {
    /// Maximum |E_err| as a fraction of the initial total energy.
    pub energy_error: f64,
    /// Maximum hourglass-to-internal energy ratio.
    pub hourglass: f64,
    /// Maximum share of steps run at the timestep floor.
    pub floor_fraction: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds { energy_error: 0.05, hourglass: 0.10, floor_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScreenReason {
    AbnormalTermination,
    EnergyBalance,
    Hourglass,
    NonFiniteChannel,
    PlasticWorkDecrease,
    TimestepCollapse,
}

impl ScreenReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ScreenReason::AbnormalTermination => "abnormal-termination",
            ScreenReason::EnergyBalance => "energy-balance",
            ScreenReason::Hourglass => "hourglass",
            ScreenReason::NonFiniteChannel => "non-finite-channel",
            ScreenReason::PlasticWorkDecrease => "plastic-work-decrease",
            ScreenReason::TimestepCollapse => "timestep-collapse",
        }
    }
}

/// Screens one run. Added mass is a diagnostic only and never fails a run.
pub fn quality_screen(
    h: &TimeHistories,
    report: &TerminationReport,
    th: &QcThresholds,
) -> (bool, Vec<ScreenReason>) {
    let mut reasons = Vec::new();
    if report.cause != TerminationCause::EndTime || !report.final_time_ms.is_finite() {
        reasons.push(ScreenReason::AbnormalTermination);
    }
    let e_err = report.energy_error_max_abs.abs().max(report.energy_error_final.abs());
    if !(e_err <= th.energy_error) {
        reasons.push(ScreenReason::EnergyBalance);
    }
    if !(report.hourglass_ratio <= th.hourglass) {
        reasons.push(ScreenReason::Hourglass);
    }
    if !h.all_finite() || h.validate().is_err() {
        reasons.push(ScreenReason::NonFiniteChannel);
    }
    let wp_scale = h.w_p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if h.w_p.windows(2).any(|w| w[1] < w[0] - 1e-12 * wp_scale) {
        reasons.push(ScreenReason::PlasticWorkDecrease);
    }
    if report.floor_fraction() > th.floor_fraction {
        reasons.push(ScreenReason::TimestepCollapse);
    }
    (reasons.is_empty(), reasons)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean() -> (TimeHistories, TerminationReport) {
        let n = 11;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let h = TimeHistories {
            f_wall: vec![[1.0, 0.0, 0.0]; n],
            e_kin: vec![1.0; n],
            e_int: vec![0.5; n],
            e_cont: vec![0.0; n],
            e_hg: vec![0.0; n],
            w_p: t.iter().map(|x| x * 0.1).collect(),
            a: vec![0.0; n],
            t,
        };
        let r = TerminationReport {
            cause: TerminationCause::EndTime,
            final_time_ms: 1.0,
            steps: 100,
            floor_steps: 0,
            added_mass_fraction: 0.3,
            energy_error_final: 0.014,
            energy_error_max_abs: 0.014,
            hourglass_ratio: 0.0,
            eroded_elements: 0,
            dt_smallest_ms: 0.01,
        };
        (h, r)
    }

    #[test]
    fn typical_energy_error_passes() {
        let (h, r) = clean();
        assert_eq!(quality_screen(&h, &r, &QcThresholds::default()), (true, vec![]));
    }

    #[test]
    fn seven_percent_energy_error_fails() {
        let (h, mut r) = clean();
        r.energy_error_max_abs = 0.07;
        let (pass, why) = quality_screen(&h, &r, &QcThresholds::default());
        assert!(!pass);
        assert_eq!(why, vec![ScreenReason::EnergyBalance]);
        assert_eq!(why[0].as_str(), "energy-balance");
    }

    #[test]
    fn nan_channel_fails() {
        let (mut h, r) = clean();
        h.e_int[4] = f64::NAN;
        let (pass, why) = quality_screen(&h, &r, &QcThresholds::default());
        assert!(!pass);
        assert_eq!(why, vec![ScreenReason::NonFiniteChannel]);
    }

    #[test]
    fn other_failure_modes() {
        let th = QcThresholds::default();
        let (mut h, mut r) = clean();
        h.w_p[5] = 0.0;
        r.cause = TerminationCause::AllEroded;
        r.floor_steps = 60;
        r.hourglass_ratio = 0.2;
        let (_, why) = quality_screen(&h, &r, &th);
        assert_eq!(
            why,
            vec![
                ScreenReason::AbnormalTermination,
                ScreenReason::Hourglass,
                ScreenReason::PlasticWorkDecrease,
                ScreenReason::TimestepCollapse,
            ]
        );
    }

    #[test]
    fn added_mass_never_fails() {
        let (h, mut r) = clean();
        r.added_mass_fraction = 5.0;
        assert!(quality_screen(&h, &r, &QcThresholds::default()).0);
    }
}
