use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Centered Latin hypercube in `[0,1]^dim`: each coordinate takes the centre
/// of every one of `count` strata exactly once, in an independent random
/// order per dimension.
pub fn lhs_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; dim]; count];
    let mut perm: Vec<usize> = (0..count).collect();
    for d in 0..dim {
        perm.shuffle(&mut rng);
        for (p, &k) in pts.iter_mut().zip(&perm) {
            p[d] = (k as f64 + 0.5) / count as f64;
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_central() {
        assert_eq!(lhs_points(3, 1, 9), vec![vec![0.5; 3]]);
    }

    #[test]
    fn one_dimensional_strata() {
        let mut x: Vec<f64> = lhs_points(1, 10, 4).into_iter().map(|p| p[0]).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, v) in x.iter().enumerate() {
            assert!(*v >= i as f64 / 10.0 && *v < (i + 1) as f64 / 10.0);
        }
    }

    #[test]
    fn marginals_hit_every_stratum_once() {
        for &n in &[50usize, 333, 10_000] {
            let pts = lhs_points(3, n, 17);
            for d in 0..3 {
                let mut count = vec![0u32; n];
                for p in &pts {
                    count[(p[d] * n as f64).floor() as usize] += 1;
                }
                assert!(count.iter().all(|&c| c == 1), "n {n} dim {d}");
            }
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(lhs_points(4, 20, 1), lhs_points(4, 20, 1));
        assert_ne!(lhs_points(4, 20, 1), lhs_points(4, 20, 2));
    }
}
