//! Distortions, divergences, utilities, probability vectors, and radius
//! calibration.

pub mod distortion;
pub mod divergence;
pub mod gamma;
pub mod prob;
pub mod utility;

pub use distortion::{prelec_switch_point, Distortion, Shape};
pub use divergence::Divergence;
pub use gamma::{chi2_cdf, chi2_quantile, ln_gamma};
pub use prob::ProbVector;
pub use utility::Utility;

use crate::{Error, Result};

/// Asymptotic divergence-ball radius at the given confidence level for a
/// sample of size `n`: phi''(1) / (2n) times the chi-square quantile with
/// `df` degrees of freedom. Families without a finite positive phi''(1)
/// (variation; chi-order away from 2) have no such calibration and error out.
pub fn radius_from_sample(
    phi: &Divergence,
    df: usize,
    n: usize,
    confidence: f64,
) -> Result<f64> {
    if n == 0 || df == 0 {
        return Err(Error::Invalid("radius calibration needs n >= 1 and df >= 1".into()));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::Invalid(format!(
            "confidence must be in [0,1), got {confidence}"
        )));
    }
    let curvature = phi.second_derivative_at_one().ok_or_else(|| {
        Error::Domain(format!(
            "{phi:?} has no finite positive second derivative at 1; \
             choose the radius directly instead of calibrating from a sample"
        ))
    })?;
    Ok(curvature / (2.0 * n as f64) * chi2_quantile(df as f64, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_values() {
        // KL, df=2, n=10, 95%: 1/(2*10) * 5.991464... = 0.2995732...
        let r = radius_from_sample(&Divergence::Kl, 2, 10, 0.95).unwrap();
        assert!((r - 0.2995732273553989).abs() < 1e-9, "got {r}");
        // modified chi-square has curvature 2
        let r2 = radius_from_sample(&Divergence::ModifiedChiSquare, 2, 10, 0.95).unwrap();
        assert!((r2 - 2.0 * r).abs() < 1e-12);
        // shrinks like 1/n
        let r200 = radius_from_sample(&Divergence::Kl, 2, 200, 0.95).unwrap();
        assert!((r200 - r / 20.0).abs() < 1e-12);
    }

    #[test]
    fn radius_rejects_uncalibratable_families() {
        assert!(radius_from_sample(&Divergence::Variation, 2, 10, 0.95).is_err());
        assert!(radius_from_sample(&Divergence::ChiOrder { theta: 3.0 }, 2, 10, 0.95).is_err());
        assert!(radius_from_sample(&Divergence::ChiOrder { theta: 2.0 }, 2, 10, 0.95).is_ok());
    }
}
