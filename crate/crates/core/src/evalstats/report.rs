//! Metric tables, leaderboards and significance reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::CaseMetrics;
use super::stats::{bootstrap_ci, paired_tests, Interval, PairedTest};
use super::EvalError;

pub const METRICS_HEADER: [&str; 7] = ["case_id", "rmse", "mae", "rel_l2_x", "rel_l2_u", "rmse_at_t", "rmse_final"];
pub const LEADERBOARD_HEADER: [&str; 7] = ["rank", "model", "rmse", "mae", "rel_l2_x", "rel_l2_u", "rmse_at_probe"];

/// Per-case metrics of one model, in case-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub cases: Vec<(String, CaseMetrics)>,
}

impl ModelMetrics {
    pub fn column(&self, f: impl Fn(&CaseMetrics) -> f64) -> Vec<f64> {
        self.cases.iter().map(|(_, m)| f(m)).collect()
    }

    pub fn mean(&self, f: impl Fn(&CaseMetrics) -> f64) -> f64 {
        let v = self.column(f);
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

pub fn write_metrics_csv(m: &ModelMetrics, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for (id, c) in &m.cases {
        let vals = [c.rmse, c.mae, c.rel_l2_x, c.rel_l2_u, c.rmse_at_t, c.rmse_final];
        let mut rec = vec![id.clone()];
        rec.extend(vals.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path, model: &str) -> Result<ModelMetrics, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(EvalError::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut cases = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, EvalError> {
            rec[i].parse().map_err(|_| EvalError::Format(format!("{}: bad number {:?}", path.display(), &rec[i])))
        };
        cases.push((
            rec[0].to_string(),
            CaseMetrics {
                rmse: num(1)?,
                mae: num(2)?,
                rel_l2_x: num(3)?,
                rel_l2_u: num(4)?,
                rmse_at_t: num(5)?,
                rmse_final: num(6)?,
            },
        ));
    }
    Ok(ModelMetrics { model: model.to_string(), cases })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model: String,
    pub rmse: f64,
    pub mae: f64,
    pub rel_l2_x: f64,
    pub rel_l2_u: f64,
    pub rmse_at_probe: f64,
}

/// Models ranked by mean per-case RMSE; ties keep input order.
pub fn leaderboard(models: &[ModelMetrics]) -> Vec<LeaderboardRow> {
    let mut rows: Vec<LeaderboardRow> = models
        .iter()
        .map(|m| LeaderboardRow {
            rank: 0,
            model: m.model.clone(),
            rmse: m.mean(|c| c.rmse),
            mae: m.mean(|c| c.mae),
            rel_l2_x: m.mean(|c| c.rel_l2_x),
            rel_l2_u: m.mean(|c| c.rel_l2_u),
            rmse_at_probe: m.mean(|c| c.rmse_at_t),
        })
        .collect();
    rows.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

pub fn write_leaderboard_csv(rows: &[LeaderboardRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEADERBOARD_HEADER)?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.model.clone(),
            format!("{:?}", r.rmse),
            format!("{:?}", r.mae),
            format!("{:?}", r.rel_l2_x),
            format!("{:?}", r.rel_l2_u),
            format!("{:?}", r.rmse_at_probe),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub n: usize,
    pub rmse: Interval,
    pub mae: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub a: String,
    pub b: String,
    /// Per-case RMSE of `a` minus that of `b`.
    pub test: PairedTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub replicates: usize,
    pub permutations: usize,
    pub seed: u64,
    pub models: Vec<ModelSummary>,
    pub pairs: Vec<PairSummary>,
}

/// Aligns two models on their case ids; both must cover the same cases.
fn aligned(a: &ModelMetrics, b: &ModelMetrics) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let bm: BTreeMap<&str, &CaseMetrics> = b.cases.iter().map(|(id, m)| (id.as_str(), m)).collect();
    if bm.len() != a.cases.len() {
        return Err(EvalError::Pairing(format!(
            "{} has {} cases, {} has {}",
            a.model,
            a.cases.len(),
            b.model,
            b.cases.len()
        )));
    }
    let mut xa = Vec::with_capacity(a.cases.len());
    let mut xb = Vec::with_capacity(a.cases.len());
    for (id, m) in &a.cases {
        let other = bm.get(id.as_str()).ok_or_else(|| EvalError::Pairing(format!("case {id} missing from {}", b.model)))?;
        xa.push(m.rmse);
        xb.push(other.rmse);
    }
    Ok((xa, xb))
}

/// Bootstrap summaries of every model and paired tests for every pair
/// `(i, j)` with `i < j`.
pub fn significance_report(
    models: &[ModelMetrics],
    replicates: usize,
    permutations: usize,
    seed: u64,
) -> Result<SignificanceReport, EvalError> {
    let mut summaries = Vec::new();
    for m in models {
        summaries.push(ModelSummary {
            model: m.model.clone(),
            n: m.cases.len(),
            rmse: bootstrap_ci(&m.column(|c| c.rmse), replicates, seed, 0.95)?,
            mae: bootstrap_ci(&m.column(|c| c.mae), replicates, seed, 0.95)?,
        });
    }
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let (a, b) = aligned(&models[i], &models[j])?;
            pairs.push(PairSummary {
                a: models[i].model.clone(),
                b: models[j].model.clone(),
                test: paired_tests(&a, &b, replicates, permutations, seed)?,
            });
        }
    }
    Ok(SignificanceReport { replicates, permutations, seed, models: summaries, pairs })
}

/// Plain-text table: pair, mean difference with interval, win rate,
/// permutation p, Wilcoxon p.
pub fn render_pairs(report: &SignificanceReport) -> String {
    let mut s = format!(
        "{:<32} {:>30} {:>9} {:>10} {:>10}\n",
        "pair", "mean diff [95% CI]", "win rate", "perm p", "wilcoxon p"
    );
    for p in &report.pairs {
        let t = &p.test;
        let w = t.wilcoxon_p.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        s.push_str(&format!(
            "{:<32} {:>30} {:>9.2} {:>10.4} {:>10}\n",
            format!("{} vs {}", p.a, p.b),
            format!("{:.4} [{:.4}, {:.4}]", t.diff.mean, t.diff.lo, t.diff.hi),
            t.win_rate,
            t.permutation_p,
            w
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(name: &str, rmse: &[f64]) -> ModelMetrics {
        ModelMetrics {
            model: name.to_string(),
            cases: rmse
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    (
                        format!("sim_{i:05}"),
                        CaseMetrics { rmse: r, mae: 0.8 * r, rel_l2_x: 0.01 * r, rel_l2_u: 0.1 * r, rmse_at_t: r, rmse_final: r },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = model("a", &[0.1, 1.0 / 3.0, 2.5]);
        let p = dir.path().join("m.csv");
        write_metrics_csv(&m, &p).unwrap();
        assert_eq!(read_metrics_csv(&p, "a").unwrap(), m);
    }

    #[test]
    fn leaderboard_ranks_by_rmse() {
        let rows = leaderboard(&[model("slow", &[3.0, 3.0]), model("fast", &[1.0, 2.0])]);
        assert_eq!(rows[0].model, "fast");
        assert_eq!(rows[0].rank, 1);
        assert_eq!(rows[1].rank, 2);
        assert_eq!(leaderboard(&[model("only", &[1.0])]).len(), 1);
    }

    #[test]
    fn identical_models_report_p_one() {
        let a = model("a", &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut b = a.clone();
        b.model = "b".into();
        let r = significance_report(&[a, b], 1000, 1000, 1).unwrap();
        assert_eq!(r.pairs[0].test.permutation_p, 1.0);
        assert!(render_pairs(&r).contains("a vs b"));
    }

    #[test]
    fn mismatched_cases_fail_pairing() {
        let a = model("a", &[1.0; 5]);
        let mut b = model("b", &[1.0; 5]);
        b.cases[2].0 = "other".into();
        assert!(matches!(significance_report(&[a, b], 1000, 100, 1), Err(EvalError::Pairing(_))));
    }
}
