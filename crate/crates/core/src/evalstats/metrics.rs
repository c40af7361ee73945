//! Per-case field prediction metrics.

use serde::{Deserialize, Serialize};

use crate::surrogate::Mat;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub rel_l2_x: f64,
    pub rel_l2_u: f64,
    pub rmse_at_t: f64,
    pub rmse_final: f64,
}

/// Metrics for displacement frames 1..=n sampled every `dt_anim` ms.
/// Position errors are per-node Euclidean distances between predicted and
/// true deformed positions.
pub fn case_metrics(pred: &[Mat], target: &[Mat], x0: &Mat, dt_anim: f64, probe_ms: f64) -> Result<CaseMetrics, EvalError> {
    let n = target.len();
    if n == 0 || pred.len() != n {
        return Err(EvalError::Shape(format!("{} predicted frames for {} target frames", pred.len(), n)));
    }
    let nodes = x0.rows;
    if x0.cols != 3 || pred.iter().chain(target).any(|m| m.shape() != (nodes, 3)) {
        return Err(EvalError::Shape(format!("frames must be {nodes}×3")));
    }
    let span = (dt_anim, n as f64 * dt_anim);
    if !(dt_anim > 0.0) || !(probe_ms >= span.0 - 1e-9 && probe_ms <= span.1 + 1e-9) {
        return Err(EvalError::Probe { probe_ms, lo: span.0, hi: span.1 });
    }
    let frame_sq = |f: usize| -> (f64, f64) {
        let (mut sq, mut ab) = (0.0, 0.0);
        for i in 0..nodes {
            let e2: f64 = (0..3).map(|a| (pred[f].at(i, a) - target[f].at(i, a)).powi(2)).sum();
            sq += e2;
            ab += e2.sqrt();
        }
        (sq, ab)
    };
    let (mut sq, mut ab) = (0.0, 0.0);
    let (mut u2, mut x2) = (0.0, 0.0);
    for f in 0..n {
        let (s, a) = frame_sq(f);
        sq += s;
        ab += a;
        u2 += target[f].data.iter().map(|u| u * u).sum::<f64>();
        x2 += target[f].data.iter().zip(&x0.data).map(|(u, x)| (x + u) * (x + u)).sum::<f64>();
    }
    if u2 == 0.0 {
        return Err(EvalError::ZeroDisplacement);
    }
    let count = (n * nodes) as f64;
    let probe = ((probe_ms / dt_anim).round() as usize).clamp(1, n) - 1;
    let per_frame_rmse = |f: usize| (frame_sq(f).0 / nodes as f64).sqrt();
    Ok(CaseMetrics {
        rmse: (sq / count).sqrt(),
        mae: ab / count,
        // X̂ − X = Û − U, so the numerators coincide
        rel_l2_x: if x2 > 0.0 { (sq / x2).sqrt() } else { 0.0 },
        rel_l2_u: (sq / u2).sqrt(),
        rmse_at_t: per_frame_rmse(probe),
        rmse_final: per_frame_rmse(n - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize, nodes: usize, v: [f64; 3]) -> Vec<Mat> {
        (0..n).map(|_| Mat::from_vec(nodes, 3, v.repeat(nodes))).collect()
    }

    #[test]
    fn exact_prediction_scores_zero() {
        let u = frames(3, 4, [1.0, -2.0, 0.5]);
        let x0 = Mat::filled(4, 3, 10.0);
        let m = case_metrics(&u, &u, &x0, 1.0, 2.0).unwrap();
        assert_eq!([m.rmse, m.mae, m.rel_l2_x, m.rel_l2_u, m.rmse_at_t, m.rmse_final], [0.0; 6]);
    }

    #[test]
    fn single_node_miss() {
        let u = frames(1, 1, [3.0, 0.0, 0.0]);
        let p = frames(1, 1, [0.0; 3]);
        let m = case_metrics(&p, &u, &Mat::zeros(1, 3), 1.0, 1.0).unwrap();
        assert_eq!((m.mae, m.rmse, m.rel_l2_u), (3.0, 3.0, 1.0));
    }

    #[test]
    fn uniform_offset() {
        let u = frames(4, 5, [2.0, 1.0, 0.0]);
        let p = frames(4, 5, [3.0, 1.0, 0.0]);
        let m = case_metrics(&p, &u, &Mat::filled(5, 3, 1.0), 0.5, 1.0).unwrap();
        assert!((m.mae - 1.0).abs() < 1e-15 && (m.rmse - 1.0).abs() < 1e-15);
        assert!(m.mae <= m.rmse);
    }

    #[test]
    fn probe_picks_nearest_frame() {
        let u = frames(4, 1, [1.0, 0.0, 0.0]);
        let mut p = u.clone();
        *p[2].at_mut(0, 0) += 2.0; // frame 3, t = 3 ms
        let m = case_metrics(&p, &u, &Mat::zeros(1, 3), 1.0, 3.2).unwrap();
        assert_eq!(m.rmse_at_t, 2.0);
        assert_eq!(m.rmse_final, 0.0);
        assert!(matches!(case_metrics(&p, &u, &Mat::zeros(1, 3), 1.0, 9.0), Err(EvalError::Probe { .. })));
    }

    #[test]
    fn zero_displacement_is_an_error() {
        let u = frames(2, 2, [0.0; 3]);
        assert!(matches!(case_metrics(&u, &u, &Mat::zeros(2, 3), 1.0, 1.0), Err(EvalError::ZeroDisplacement)));
    }
}
