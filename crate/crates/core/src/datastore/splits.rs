use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatastoreError;

pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSet {
    pub fn save(&self, path: &Path) -> Result<(), DatastoreError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatastoreError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Deterministic train/validation/test partition of `case_ids`. Sizes are
/// rounded from the fractions; when the fractions sum to one the test split
/// takes whatever remains.
pub fn make_splits(case_ids: &[String], fractions: [f64; 3], seed: u64) -> Result<SplitSet, DatastoreError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || sum > 1.0 + 1e-9 || sum <= 0.0 {
        return Err(DatastoreError::Splits(format!("invalid fractions {fractions:?}")));
    }
    let n = case_ids.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = if (sum - 1.0).abs() <= 1e-9 {
        n.checked_sub(n_train + n_val)
    } else {
        Some((fractions[2] * n as f64).round() as usize).filter(|t| n_train + n_val + t <= n)
    }
    .ok_or_else(|| DatastoreError::Splits(format!("fractions {fractions:?} overflow {n} cases")))?;
    for (f, size, name) in [(fractions[0], n_train, "train"), (fractions[1], n_val, "validation"), (fractions[2], n_test, "test")] {
        if f > 0.0 && size == 0 {
            return Err(DatastoreError::Splits(format!("{n} cases leave the {name} split empty")));
        }
    }
    let mut ids = case_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != n {
        return Err(DatastoreError::Splits("duplicate case ids".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ids[n_train + n_val..n_train + n_val + n_test].to_vec();
    let validation = ids[n_train..n_train + n_val].to_vec();
    ids.truncate(n_train);
    Ok(SplitSet { seed, train: ids, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(crate::doe::case_id).collect()
    }

    #[test]
    fn standard_fractions() {
        for seed in [0, 42, 7] {
            let s = make_splits(&ids(100), [0.7, 0.15, 0.15], seed).unwrap();
            assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
        }
        let s = make_splits(&ids(10), [0.8, 0.1, 0.1], 42).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        let s = make_splits(&ids(40), [0.7, 0.15, 0.15], 42).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (28, 6, 6));
    }

    #[test]
    fn deterministic_disjoint_and_exhaustive() {
        let a = make_splits(&ids(57), [0.7, 0.15, 0.15], 42).unwrap();
        assert_eq!(a, make_splits(&ids(57), [0.7, 0.15, 0.15], 42).unwrap());
        let mut all: Vec<String> = a.train.iter().chain(&a.validation).chain(&a.test).cloned().collect();
        all.sort();
        assert_eq!(all, ids(57));
        let b = make_splits(&ids(57), [0.7, 0.15, 0.15], 43).unwrap();
        assert_ne!(a.train, b.train);
        assert_eq!(a.train.len(), b.train.len());
    }

    #[test]
    fn too_few_cases() {
        assert!(make_splits(&ids(3), [0.7, 0.15, 0.15], 1).is_err());
        assert!(make_splits(&ids(10), [0.7, 0.5, 0.0], 1).is_err());
    }

    #[test]
    fn json_shape() {
        let s = make_splits(&ids(10), [0.8, 0.1, 0.1], 42).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 4);
        assert_eq!(v["seed"], 42);
    }
}
