use super::DoeError;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the candidate whose nearest accumulated point is farthest away.
/// Ties go to the lowest index.
pub fn maximin_next(accumulated: &[Vec<f64>], candidates: &[Vec<f64>]) -> Result<usize, DoeError> {
    if accumulated.is_empty() || candidates.is_empty() {
        return Err(DoeError::EmptyInput);
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for a in accumulated {
            nearest = nearest.min(dist2(a, c));
            if nearest <= best.1 {
                break;
            }
        }
        if nearest > best.1 {
            best = (i, nearest);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(maximin_next(&pts(&[0.0]), &pts(&[0.0, 0.5, 1.0])).unwrap(), 2);
        assert_eq!(maximin_next(&pts(&[0.0, 1.0]), &pts(&[0.25, 0.5, 0.75])).unwrap(), 1);
        // equal distances resolve to the first candidate
        assert_eq!(maximin_next(&pts(&[0.5]), &pts(&[0.0, 1.0])).unwrap(), 0);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(maximin_next(&[], &pts(&[0.0])), Err(DoeError::EmptyInput));
        assert_eq!(maximin_next(&pts(&[0.0]), &[]), Err(DoeError::EmptyInput));
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let acc: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
            let cand: Vec<Vec<f64>> = (0..64).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
            let score = |c: &Vec<f64>| {
                acc.iter()
                    .map(|a| a.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            };
            let mut brute = 0;
            for i in 1..cand.len() {
                if score(&cand[i]) > score(&cand[brute]) {
                    brute = i;
                }
            }
            assert_eq!(maximin_next(&acc, &cand).unwrap(), brute);
        }
    }
}
