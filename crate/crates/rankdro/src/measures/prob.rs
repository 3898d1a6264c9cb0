//! Probability vectors on a finite scenario set.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A probability vector: entries >= 0, summing to 1.
///
/// Construction accepts raw solver output (entries down to -1e-9, sum within
/// 1e-9 of one), clamps negatives, and renormalizes exactly, so every held
/// value satisfies the tight invariants: entries >= 0 and |sum - 1| <= 1e-12.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Invalid("probability vector must be nonempty".into()));
        }
        for (i, &e) in entries.iter().enumerate() {
            if !e.is_finite() || e < -1e-9 {
                return Err(Error::Invalid(format!(
                    "probability entry {i} is {e}; entries must be >= 0"
                )));
            }
        }
        let mut v: Vec<f64> = entries.iter().map(|&e| e.max(0.0)).collect();
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "probability entries sum to {sum}, expected 1"
            )));
        }
        for e in v.iter_mut() {
            *e /= sum;
        }
        Ok(ProbVector(v))
    }

    /// A nominal vector additionally needs strictly positive entries (the
    /// divergence ball is centered here and ratios q_i/p_i must be defined).
    pub fn nominal(entries: Vec<f64>) -> Result<Self> {
        let v = Self::new(entries)?;
        if v.0.iter().any(|&e| e <= 0.0) {
            return Err(Error::Invalid(
                "nominal probabilities must be strictly positive".into(),
            ));
        }
        Ok(v)
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0);
        ProbVector(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mass of a subset given by indices.
    pub fn mass(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&i| self.0[i]).sum()
    }

    /// Mass of a subset given by bitmask (bit i = scenario i).
    pub fn mass_mask(&self, mask: usize) -> f64 {
        let mut s = 0.0;
        for (i, &e) in self.0.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s += e;
            }
        }
        s
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_and_cleans_solver_noise() {
        let p = ProbVector::new(vec![0.5, 0.5 + 3e-10, -2e-10]).unwrap();
        assert!(p.as_slice().iter().all(|&e| e >= 0.0));
        let sum: f64 = p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ProbVector::new(vec![0.7, 0.2]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6, -0.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::nominal(vec![1.0, 0.0]).is_err());
        assert!(ProbVector::nominal(vec![0.4, 0.6]).is_ok());
    }

    #[test]
    fn subset_mass() {
        let p = ProbVector::new(vec![0.375, 0.375, 0.25]).unwrap();
        assert!((p.mass(&[0, 2]) - 0.625).abs() < 1e-15);
        assert!((p.mass_mask(0b101) - 0.625).abs() < 1e-15);
        assert!((p.mass_mask(0b111) - 1.0).abs() < 1e-15);
    }
}
