//! The one-parameter transformation family that links observed rates to the
//! bivariate modelling scale.
//!
//! For a rate `x` in (0, 1) and shape parameter `alpha` in [0, 2] the
//! transform is
//!
//! ```text
//!     t(x) = alpha * ln(x) - (2 - alpha) * ln(1 - x)
//! ```
//!
//! Special cases recover familiar links:
//!
//! * `alpha = 1`  — the logit, `ln(x / (1 - x))`,
//! * `alpha = 2`  — a pure log link, `2 ln(x)` (proportional-hazard shape),
//! * `alpha = 0`  — the complementary log, `-2 ln(1 - x)`.
//!
//! Interior values interpolate between these. For `alpha` strictly inside
//! (0, 2) the transform maps (0, 1) onto the whole real line; at the two
//! boundary values the image is a half-line, so the inverse can be asked
//! for an unattainable value — that case is reported as a range error, and
//! [`Alpha::inverse_saturating`] is provided for callers that prefer
//! clamping to the unit-interval endpoint instead.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;

/// Shape parameters used by the default model grid.
pub const GRID_ALPHAS: [f64; 5] = [0.0, 0.6, 1.0, 1.4, 2.0];

/// Absolute tolerance (on the rate scale) of the numerical inverse.
const INVERSE_TOL: f64 = 1e-12;

/// A validated transform shape parameter in [0, 2].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Alpha(f64);

impl Alpha {
    /// The logit link.
    pub const LOGIT: Alpha = Alpha(1.0);

    /// Validates that `value` is a finite number in [0, 2].
    pub fn new(value: f64) -> Result<Alpha> {
        if value.is_finite() && (0.0..=2.0).contains(&value) {
            Ok(Alpha(value))
        } else {
            Err(Error::Config(format!(
                "alpha must be a finite number in [0, 2], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Applies the transform to a rate in the open unit interval.
    pub fn apply(self, x: f64) -> Result<f64> {
        check_rate(x)?;
        let a = self.0;
        Ok(a * x.ln() - (2.0 - a) * (1.0 - x).ln())
    }

    /// Derivative of the transform, `alpha / x + (2 - alpha) / (1 - x)`.
    ///
    /// Strictly positive on (0, 1) for every valid alpha, which is what
    /// makes the transform monotone and the log-Jacobian well defined.
    pub fn deriv(self, x: f64) -> Result<f64> {
        check_rate(x)?;
        let a = self.0;
        Ok(a / x + (2.0 - a) / (1.0 - x))
    }

    /// Inverts the transform: finds `x` in (0, 1) with `t(x) = z`.
    ///
    /// Closed forms are used for `alpha` in {0, 1, 2}; elsewhere a
    /// bracketed bisection/Newton hybrid converges to within `1e-12` on the
    /// rate scale. For the boundary shapes the attainable range is a
    /// half-line (`z > 0` when `alpha = 0`, `z < 0` when `alpha = 2`) and
    /// values outside it raise [`Error::TransformRange`].
    pub fn inverse(self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::TransformRange(format!(
                "transformed value must be finite, got {z}"
            )));
        }
        let a = self.0;
        if a == 0.0 {
            if z <= 0.0 {
                return Err(Error::TransformRange(format!(
                    "alpha = 0 only attains positive values, got {z}"
                )));
            }
            return Ok(clamp_open(1.0 - (-z / 2.0).exp()));
        }
        if a == 2.0 {
            if z >= 0.0 {
                return Err(Error::TransformRange(format!(
                    "alpha = 2 only attains negative values, got {z}"
                )));
            }
            return Ok(clamp_open((z / 2.0).exp()));
        }
        if a == 1.0 {
            // logistic; stable for both signs of z
            let x = if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            };
            return Ok(clamp_open(x));
        }
        Ok(self.inverse_interior(z))
    }

    /// Total version of [`Alpha::inverse`] that saturates instead of
    /// erroring: out-of-range values for the boundary shapes map to the
    /// closed unit-interval endpoint (`0.0` or `1.0`). Summary-curve and
    /// empirical-likelihood callers use this, where a saturated endpoint is
    /// the meaningful limit.
    pub fn inverse_saturating(self, z: f64) -> f64 {
        if self.0 == 0.0 && z <= 0.0 {
            return 0.0;
        }
        if self.0 == 2.0 && z >= 0.0 {
            return 1.0;
        }
        if z == f64::NEG_INFINITY {
            return 0.0;
        }
        if z == f64::INFINITY {
            return 1.0;
        }
        // infallible: range checked above, alpha already validated
        self.inverse(z).expect("in-range inverse")
    }

    /// Safeguarded Newton iteration inside a bisection bracket, for alpha
    /// strictly inside (0, 2) where the transform is onto the real line.
    fn inverse_interior(self, z: f64) -> f64 {
        let a = self.0;
        // Asymptotics give a cheap starting bracket: t(x) ~ a ln x near 0
        // and t(x) ~ -(2-a) ln(1-x) near 1.
        let mut lo = f64::MIN_POSITIVE;
        let mut hi = 1.0 - f64::EPSILON / 2.0;
        let eval = |x: f64| a * x.ln() - (2.0 - a) * (1.0 - x).ln() - z;
        // values at the representable extremes are +/- huge but finite
        let mut x = 1.0 / (1.0 + (-z / 2.0).exp()); // logistic-shaped guess
        x = x.clamp(1e-12, 1.0 - 1e-12);
        for _ in 0..200 {
            let f = eval(x);
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let fp = a / x + (2.0 - a) / (1.0 - x);
            let newton = x - f / fp;
            // accept the Newton step only while it stays inside the bracket
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= INVERSE_TOL {
                return clamp_open(next);
            }
            x = next;
        }
        clamp_open(x)
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;
    fn from_str(s: &str) -> Result<Alpha> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse alpha from {s:?}")))?;
        Alpha::new(v)
    }
}

/// The pair of shapes applied to the two rate coordinates: `p` to
/// sensitivity, `q` to the false-positive rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformPair {
    pub p: Alpha,
    pub q: Alpha,
}

impl TransformPair {
    pub fn new(p: Alpha, q: Alpha) -> Self {
        TransformPair { p, q }
    }

    /// Log-Jacobian of the bivariate change of variables at an observed
    /// rate pair: `ln t_p'(sens) + ln t_q'(fpr)`.
    ///
    /// This is the term that puts log-likelihoods of differently
    /// transformed models on the common scale of the raw rates.
    pub fn log_jacobian(&self, sens: f64, fpr: f64) -> Result<f64> {
        Ok(self.p.deriv(sens)?.ln() + self.q.deriv(fpr)?.ln())
    }
}

impl fmt::Display for TransformPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

fn check_rate(x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::TransformDomain(format!(
            "rate must lie strictly inside (0, 1), got {x}"
        )))
    }
}

/// Clamps into the open unit interval using the nearest representable
/// neighbours of the endpoints.
fn clamp_open(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE).min(1.0 - f64::EPSILON / 2.0)
}
