//! Utility functions applied to outcomes before distortion weighting.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// u(x) = x
    Linear,
    /// u(x) = 1 - exp(-x / scale), scale > 0
    Exponential { scale: f64 },
    /// nondecreasing piecewise-linear interpolant through (xs, ys);
    /// extended by its end slopes outside [xs[0], xs[last]]
    Pl { xs: Vec<f64>, ys: Vec<f64> },
}

impl Utility {
    pub fn validate(&self) -> Result<()> {
        match self {
            Utility::Linear => Ok(()),
            Utility::Exponential { scale } => {
                if *scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Invalid(format!("utility scale must be > 0, got {scale}")))
                }
            }
            Utility::Pl { xs, ys } => {
                if xs.len() != ys.len() || xs.len() < 2 {
                    return Err(Error::Invalid("pl utility needs >= 2 matching knots".into()));
                }
                for w in xs.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::Invalid("pl utility knots must strictly increase".into()));
                    }
                }
                for w in ys.windows(2) {
                    if w[1] < w[0] - 1e-12 {
                        return Err(Error::Invalid("pl utility must be nondecreasing".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Utility::Linear => x,
            Utility::Exponential { scale } => 1.0 - (-x / scale).exp(),
            Utility::Pl { xs, ys } => {
                let k = xs.len();
                if x <= xs[0] {
                    let s = (ys[1] - ys[0]) / (xs[1] - xs[0]);
                    return ys[0] + s * (x - xs[0]);
                }
                if x >= xs[k - 1] {
                    let s = (ys[k - 1] - ys[k - 2]) / (xs[k - 1] - xs[k - 2]);
                    return ys[k - 1] + s * (x - xs[k - 1]);
                }
                let j = xs.partition_point(|&v| v <= x).min(k - 1);
                let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// A supergradient (right slope for pl kinks).
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Utility::Linear => 1.0,
            Utility::Exponential { scale } => (-x / scale).exp() / scale,
            Utility::Pl { xs, ys } => {
                let k = xs.len();
                let j = xs.partition_point(|&v| v <= x).clamp(1, k - 1);
                (ys[j] - ys[j - 1]) / (xs[j] - xs[j - 1])
            }
        }
    }

    /// True when -u(x) is a max of affine pieces (needed by the linear
    /// reformulations): linear always; pl only when concave.
    pub fn is_concave(&self) -> bool {
        match self {
            Utility::Linear => true,
            Utility::Exponential { .. } => true,
            Utility::Pl { xs, ys } => {
                let mut prev = f64::INFINITY;
                for j in 1..xs.len() {
                    let s = (ys[j] - ys[j - 1]) / (xs[j] - xs[j - 1]);
                    if s > prev + 1e-12 {
                        return false;
                    }
                    prev = s;
                }
                true
            }
        }
    }
}
