//! phi-divergence catalog: pointwise values, convex conjugates, perspectives,
//! and the constants needed for radius calibration and gradient steps.
//!
//! Conventions. Each family is a convex phi on [0, inf) with phi(1) = 0. The
//! divergence between q and a strictly positive p is sum_i p_i phi(q_i/p_i).
//! When a p_i is zero the contribution is q_i * lim_{t->inf} phi(t)/t (zero
//! when q_i is zero too). The conjugate is phi*(y) = sup_{t>=0} {ty - phi(t)},
//! finite exactly on the stated domains; the perspective is
//! gamma*phi*(s/gamma) for gamma > 0 and its closure at gamma = 0 (0 when
//! s <= 0, +inf otherwise).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Divergence {
    /// t ln t - t + 1
    Kl,
    /// -ln t + t - 1
    Burg,
    /// (t-1)^2 / t
    ChiSquare,
    /// (t-1)^2
    ModifiedChiSquare,
    /// |t-1|
    Variation,
    /// (sqrt(t)-1)^2
    Hellinger,
    /// |t-1|^theta, theta > 1
    ChiOrder { theta: f64 },
    /// (1 - theta + theta t - t^theta) / (theta (1-theta)), theta in (0,1)
    CressieRead { theta: f64 },
}

use Divergence::*;

impl Divergence {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChiOrder { theta } if !(*theta > 1.0) => Err(Error::Invalid(format!(
                "chi-order divergence needs theta > 1, got {theta}"
            ))),
            CressieRead { theta } if !(*theta > 0.0 && *theta < 1.0) => Err(Error::Invalid(
                format!("cressie-read divergence needs theta in (0,1), got {theta}"),
            )),
            _ => Ok(()),
        }
    }

    /// phi(t) for t >= 0; +inf where the family is (Burg and chi-square at 0).
    pub fn phi(&self, t: f64) -> f64 {
        debug_assert!(t >= -1e-12, "phi argument {t} < 0");
        let t = t.max(0.0);
        match self {
            Kl => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            Burg => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    -t.ln() + t - 1.0
                }
            }
            ChiSquare => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    (t - 1.0) * (t - 1.0) / t
                }
            }
            ModifiedChiSquare => (t - 1.0) * (t - 1.0),
            Variation => (t - 1.0).abs(),
            Hellinger => {
                let d = t.sqrt() - 1.0;
                d * d
            }
            ChiOrder { theta } => (t - 1.0).abs().powf(*theta),
            CressieRead { theta } => {
                (1.0 - theta + theta * t - t.powf(*theta)) / (theta * (1.0 - theta))
            }
        }
    }

    /// A subgradient of phi at t > 0 (at kinks any valid choice).
    pub fn phi_deriv(&self, t: f64) -> f64 {
        let t = t.max(1e-300);
        match self {
            Kl => t.ln(),
            Burg => 1.0 - 1.0 / t,
            ChiSquare => 1.0 - 1.0 / (t * t),
            ModifiedChiSquare => 2.0 * (t - 1.0),
            Variation => {
                if t > 1.0 {
                    1.0
                } else if t < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Hellinger => 1.0 - 1.0 / t.sqrt(),
            ChiOrder { theta } => {
                let d = t - 1.0;
                theta * d.abs().powf(theta - 1.0) * d.signum()
            }
            CressieRead { theta } => (1.0 - t.powf(theta - 1.0)) / (1.0 - theta),
        }
    }

    /// Conjugate phi*(y); Err outside the finite domain.
    pub fn conjugate(&self, y: f64) -> Result<f64> {
        let v = self.conjugate_or_inf(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!(
                "conjugate of {self:?} is +inf at y = {y}"
            )))
        }
    }

    /// Conjugate with +inf instead of Err (solver-facing).
    pub fn conjugate_or_inf(&self, y: f64) -> f64 {
        match self {
            Kl => y.exp() - 1.0,
            Burg => {
                if y < 1.0 {
                    -(1.0 - y).ln()
                } else {
                    f64::INFINITY
                }
            }
            ChiSquare => {
                if y <= 1.0 {
                    2.0 - 2.0 * (1.0 - y).sqrt()
                } else {
                    f64::INFINITY
                }
            }
            ModifiedChiSquare => {
                let z = (1.0 + y / 2.0).max(0.0);
                z * z - 1.0
            }
            Variation => {
                if y <= 1.0 {
                    y.max(-1.0)
                } else {
                    f64::INFINITY
                }
            }
            Hellinger => {
                if y < 1.0 {
                    y / (1.0 - y)
                } else {
                    f64::INFINITY
                }
            }
            ChiOrder { theta } => {
                if y >= -theta {
                    y + (theta - 1.0) * (y.abs() / theta).powf(theta / (theta - 1.0))
                } else {
                    -1.0
                }
            }
            CressieRead { theta } => {
                let w = 1.0 - y * (1.0 - theta);
                if w > 0.0 {
                    (w.powf(theta / (theta - 1.0)) - 1.0) / theta
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Maximizer t*(y) of ty - phi(t): the derivative of the conjugate where
    /// it is finite and differentiable (any supergradient choice at kinks).
    pub fn conjugate_deriv(&self, y: f64) -> f64 {
        match self {
            Kl => y.exp(),
            Burg => 1.0 / (1.0 - y),
            ChiSquare => 1.0 / (1.0 - y).max(1e-300).sqrt(),
            ModifiedChiSquare => (1.0 + y / 2.0).max(0.0),
            Variation => {
                if y < -1.0 {
                    0.0
                } else if y == -1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            Hellinger => 1.0 / ((1.0 - y) * (1.0 - y)),
            ChiOrder { theta } => {
                if y < -theta {
                    0.0
                } else {
                    let s = (y.abs() / theta).powf(1.0 / (theta - 1.0));
                    if y >= 0.0 {
                        1.0 + s
                    } else {
                        1.0 - s
                    }
                }
            }
            CressieRead { theta } => {
                let w = 1.0 - y * (1.0 - theta);
                w.max(1e-300).powf(1.0 / (theta - 1.0))
            }
        }
    }

    /// Perspective gamma*phi*(s/gamma), closed at gamma = 0.
    pub fn perspective(&self, s: f64, gamma: f64) -> f64 {
        debug_assert!(gamma >= -1e-12, "perspective needs gamma >= 0, got {gamma}");
        if gamma <= 1e-300 {
            // recession of the conjugate: phi* is finite on (-inf, ybar] with
            // slope t >= 0, so the closure is 0 for s <= 0 and +inf otherwise
            return if s <= 0.0 { 0.0 } else { f64::INFINITY };
        }
        gamma * self.conjugate_or_inf(s / gamma)
    }

    /// lim_{t->inf} phi(t)/t, the weight of mass placed where p_i = 0.
    pub fn limit_ratio(&self) -> f64 {
        match self {
            Kl | ModifiedChiSquare | ChiOrder { .. } => f64::INFINITY,
            Burg | ChiSquare | Variation | Hellinger => 1.0,
            CressieRead { theta } => 1.0 / (1.0 - theta),
        }
    }

    /// phi''(1) where defined and positive-finite; None otherwise
    /// (Variation has a kink at 1; chi-order with theta != 2 degenerates).
    pub fn second_derivative_at_one(&self) -> Option<f64> {
        match self {
            Kl => Some(1.0),
            Burg => Some(1.0),
            ChiSquare => Some(2.0),
            ModifiedChiSquare => Some(2.0),
            Variation => None,
            Hellinger => Some(0.5),
            ChiOrder { theta } => {
                if (*theta - 2.0).abs() < 1e-12 {
                    Some(2.0)
                } else {
                    None
                }
            }
            CressieRead { .. } => Some(1.0),
        }
    }

    /// I_phi(q, p) = sum_i p_i phi(q_i / p_i), with the 0-mass convention.
    pub fn divergence(&self, q: &[f64], p: &[f64]) -> f64 {
        assert_eq!(q.len(), p.len());
        let mut total = 0.0;
        for (&qi, &pi) in q.iter().zip(p) {
            if pi > 0.0 {
                total += pi * self.phi(qi / pi);
            } else if qi > 1e-15 {
                total += qi * self.limit_ratio();
            }
        }
        total
    }

    /// Gradient of q -> I_phi(q, p): entries phi'(q_i / p_i).
    pub fn divergence_grad(&self, q: &[f64], p: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(p)
            .map(|(&qi, &pi)| self.phi_deriv(qi / pi.max(1e-300)))
            .collect()
    }
}
