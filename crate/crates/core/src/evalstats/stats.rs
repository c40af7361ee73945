//! Bootstrap intervals and paired significance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
/// Largest sample (after dropping zero differences) for which the Wilcoxon
/// null distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Replicate `r` draws from its own stream so results do not depend on
/// how replicates are spread over threads.
fn stream(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Mean anchored at the first value, which keeps constant data exact.
fn anchored_mean(values: &[f64], anchor: f64) -> f64 {
    anchor + values.iter().map(|v| v - anchor).sum::<f64>() / values.len() as f64
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Percentile bootstrap interval for the mean. The bounds are widened to
/// contain the sample mean if resampling ever leaves it outside.
pub fn bootstrap_ci(values: &[f64], replicates: usize, seed: u64, level: f64) -> Result<Interval, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, got: n });
    }
    if replicates < 100 {
        return Err(EvalError::Config(format!("need at least 100 replicates, got {replicates}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::Config(format!("confidence level {level} outside (0, 1)")));
    }
    let anchor = values[0];
    let mean = anchored_mean(values, anchor);
    let mut means: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let s: f64 = (0..n).map(|_| values[rng.random_range(0..n)] - anchor).sum();
            anchor + s / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok(Interval { mean, lo: quantile(&means, a).min(mean), hi: quantile(&means, 1.0 - a).max(mean) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    /// Mean of `a − b` with its paired bootstrap interval.
    pub diff: Interval,
    /// Fraction of cases with `a < b` (lower is better).
    pub win_rate: f64,
    pub permutation_p: f64,
    /// `None` when every difference is zero.
    pub wilcoxon_p: Option<f64>,
}

/// Paired comparison of per-case scores `a` and `b` (lower is better).
pub fn paired_tests(a: &[f64], b: &[f64], replicates: usize, permutations: usize, seed: u64) -> Result<PairedTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Pairing(format!("{} values against {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 5 {
        return Err(EvalError::TooFew { needed: 5, got: n });
    }
    if permutations == 0 {
        return Err(EvalError::Config("need at least one permutation draw".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let diff = bootstrap_ci(&d, replicates, seed, 0.95)?;
    let win_rate = d.iter().filter(|&&x| x < 0.0).count() as f64 / n as f64;
    Ok(PairedTest {
        n,
        diff,
        win_rate,
        permutation_p: sign_flip_p(&d, permutations, seed ^ 0x5eed_f11b),
        wilcoxon_p: wilcoxon_p(&d),
    })
}

/// Two-sided Monte-Carlo sign-flip test on the mean difference with the
/// add-one convention `(1 + hits) / (1 + draws)`.
pub fn sign_flip_p(d: &[f64], draws: usize, seed: u64) -> f64 {
    let t = d.iter().sum::<f64>().abs();
    // tolerance so that sign patterns equal to the observed one are never
    // lost to summation order
    let scale: f64 = d.iter().map(|x| x.abs()).sum();
    let tol = 1e-12 * scale;
    let hits: usize = (0..draws)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let s: f64 = d.iter().map(|&x| if rng.random::<bool>() { x } else { -x }).sum();
            usize::from(s.abs() >= t - tol)
        })
        .sum();
    (1 + hits) as f64 / (1 + draws) as f64
}

/// Average ranks of `|d|` (1-based), ties sharing the mean rank.
fn signed_ranks(d: &[f64]) -> Vec<(f64, bool)> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    d.iter().zip(ranks).map(|(x, r)| (r, *x > 0.0)).collect()
}

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped;
/// the null distribution is enumerated exactly for up to
/// [`WILCOXON_EXACT_MAX`] remaining pairs and approximated by a tie-corrected
/// normal (no continuity correction) above that.
pub fn wilcoxon_p(d: &[f64]) -> Option<f64> {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return None;
    }
    let ranks = signed_ranks(&nz);
    // doubled ranks are integers even with average ties
    let w2: usize = ranks.iter().filter(|r| r.1).map(|r| (2.0 * r.0).round() as usize).sum();
    let p = if n <= WILCOXON_EXACT_MAX {
        let total: usize = ranks.iter().map(|r| (2.0 * r.0).round() as usize).sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for r in &ranks {
            let step = (2.0 * r.0).round() as usize;
            for s in (step..=total).rev() {
                counts[s] += counts[s - step];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted: Vec<f64> = ranks.iter().map(|r| r.0).collect();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            let t = j as f64;
            ties += t * t * t - t;
            i += j;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w2 as f64 / 2.0 - mu) / var.sqrt();
            let norm = Normal::standard();
            (2.0 * norm.sf(z.abs())).min(1.0)
        }
    };
    Some(p.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    #[test]
    fn constant_data_gives_degenerate_interval() {
        let ci = bootstrap_ci(&[0.1; 10], 1000, 1, 0.95).unwrap();
        assert_eq!((ci.mean, ci.lo, ci.hi), (0.1, 0.1, 0.1));
    }

    #[test]
    fn binary_data_bounds() {
        let ci = bootstrap_ci(&[0.0, 1.0], 1000, 2, 0.95).unwrap();
        assert_eq!(ci.mean, 0.5);
        assert!(ci.lo >= 0.0 && ci.hi <= 1.0 && ci.lo <= ci.mean && ci.mean <= ci.hi);
    }

    #[test]
    fn bootstrap_rejects_bad_input() {
        assert!(bootstrap_ci(&[1.0], 1000, 0, 0.95).is_err());
        assert!(bootstrap_ci(&[1.0, 2.0], 10, 0, 0.95).is_err());
    }

    #[test]
    fn bootstrap_is_seeded_and_shift_equivariant() {
        let v: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 * 0.25).collect();
        let a = bootstrap_ci(&v, 2000, 7, 0.9).unwrap();
        assert_eq!(a, bootstrap_ci(&v, 2000, 7, 0.9).unwrap());
        let shifted: Vec<f64> = v.iter().map(|x| x + 5.0).collect();
        let b = bootstrap_ci(&shifted, 2000, 7, 0.9).unwrap();
        for (x, y) in [(a.mean, b.mean), (a.lo, b.lo), (a.hi, b.hi)] {
            assert!((y - x - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_coverage_of_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut covered = 0;
        for rep in 0..200 {
            let v: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ci = bootstrap_ci(&v, DEFAULT_REPLICATES, rep, 0.95).unwrap();
            covered += usize::from(ci.lo <= 0.0 && 0.0 <= ci.hi);
        }
        let rate = covered as f64 / 200.0;
        assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
    }

    /// Full 2ⁿ enumeration of sign assignments on the ranks.
    fn brute_wilcoxon(d: &[f64]) -> f64 {
        let ranks = signed_ranks(d);
        let n = d.len();
        let w: f64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
        let (mut le, mut ge) = (0usize, 0usize);
        for mask in 0..(1usize << n) {
            let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k].0).sum();
            le += usize::from(s <= w + 1e-9);
            ge += usize::from(s >= w - 1e-9);
        }
        (2.0 * le.min(ge) as f64 / (1usize << n) as f64).min(1.0)
    }

    #[test]
    fn wilcoxon_all_negative_five() {
        assert_eq!(wilcoxon_p(&[-1.0, -2.0, -0.5, -3.0, -0.1]), Some(0.0625));
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for n in 1..=10 {
            for _ in 0..20 {
                // coarse values so ties occur
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-4i32..4) as f64 + 0.5).collect();
                assert_eq!(wilcoxon_p(&d).unwrap(), brute_wilcoxon(&d).max(f64::MIN_POSITIVE), "{d:?}");
            }
        }
    }

    #[test]
    fn wilcoxon_normal_branch() {
        let d: Vec<f64> = (1..=30).map(|i| if i % 3 == 0 { i as f64 } else { -(i as f64) }).collect();
        let p = wilcoxon_p(&d).unwrap();
        assert!(p > 0.0 && p <= 1.0);
        assert!(wilcoxon_p(&vec![0.0; 30]).is_none());
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = paired_tests(&a, &a, 1000, 1000, 3).unwrap();
        assert_eq!(t.diff.mean, 0.0);
        assert_eq!(t.win_rate, 0.0);
        assert_eq!(t.permutation_p, 1.0);
        assert!(t.wilcoxon_p.is_none());
    }

    #[test]
    fn dominant_model_is_significant() {
        let a: Vec<f64> = (0..15).map(|i| 1.0 + 0.1 * i as f64).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + 0.5 + 0.05 * i as f64).collect();
        let t = paired_tests(&a, &b, DEFAULT_REPLICATES, DEFAULT_PERMUTATIONS, 42).unwrap();
        assert_eq!(t.win_rate, 1.0);
        assert!(t.permutation_p < 0.001, "p = {}", t.permutation_p);
        assert!(t.wilcoxon_p.unwrap() < 0.001);
    }

    #[test]
    fn swapping_arguments_negates() {
        let a = [1.0, 3.0, 2.0, 5.0, 4.0, 0.5];
        let b = [2.0, 1.0, 2.5, 4.0, 6.0, 0.7];
        let ab = paired_tests(&a, &b, 1000, 2000, 9).unwrap();
        let ba = paired_tests(&b, &a, 1000, 2000, 9).unwrap();
        assert!((ab.diff.mean + ba.diff.mean).abs() < 1e-15);
        assert!((ab.win_rate + ba.win_rate - 1.0).abs() < 1e-15);
        assert_eq!(ab.wilcoxon_p, ba.wilcoxon_p);
    }

    #[test]
    fn pairing_preconditions() {
        assert!(matches!(paired_tests(&[1.0; 5], &[1.0; 6], 100, 10, 0), Err(EvalError::Pairing(_))));
        assert!(matches!(paired_tests(&[1.0; 4], &[1.0; 4], 100, 10, 0), Err(EvalError::TooFew { .. })));
    }
}
