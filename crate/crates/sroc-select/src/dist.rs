//! Participant-level outcome distributions for the simulation scenarios.
//!
//! Four families are supported: logistic, normal, skew-normal and a normal
//! truncated at one standard deviation either side of its mean. Each spec
//! exposes sampling, the CDF and the quantile function — the latter two are
//! what the theoretical ROC curve `C(u) = 1 - F1(F0^{-1}(1-u))` is built
//! from, so they must be mutually consistent to high accuracy.
//!
//! The skew-normal CDF needs Owen's T function,
//! `T(h, a) = (2*pi)^{-1} * Int_0^a exp(-h^2 (1+t^2)/2) / (1+t^2) dt`,
//! which is evaluated by fixed-order Gauss–Legendre quadrature: the
//! integrand is analytic and the shape parameters in play are small, so a
//! 50-node rule is converged to machine precision.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn std_normal() -> &'static Normal {
    static CELL: OnceLock<Normal> = OnceLock::new();
    CELL.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

const GAUSS_LEGENDRE_ORDER: usize = 50;

/// Nodes and weights of the Gauss–Legendre rule on [-1, 1], computed once
/// by Newton iteration on the Legendre polynomial.
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static CELL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let n = GAUSS_LEGENDRE_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess for the i-th positive root
            let mut x =
                (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                // P_n(x) and its derivative by the three-term recurrence
                let (mut p_prev, mut p) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
                    p_prev = p;
                    p = p_next;
                }
                let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p_prev, mut p) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
                p_prev = p;
                p = p_next;
            }
            let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Owen's T function, even in `h` and odd in `a`.
pub fn owen_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        return -owen_t(h, -a);
    }
    let h2 = h * h;
    let (nodes, weights) = gauss_legendre();
    // map [-1, 1] onto [0, a]
    let half = 0.5 * a;
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let t = half * (x + 1.0);
        let one_t2 = 1.0 + t * t;
        sum += w * (-0.5 * h2 * one_t2).exp() / one_t2;
    }
    half * sum / (2.0 * std::f64::consts::PI)
}

/// A participant-level outcome distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Logistic {
        location: f64,
        scale: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Azzalini skew-normal with location `xi`, scale `omega` and shape
    /// `lambda`.
    SkewNormal {
        location: f64,
        scale: f64,
        shape: f64,
    },
    /// Normal(mean, sd) conditioned on [mean - sd, mean + sd].
    TruncNormal {
        mean: f64,
        sd: f64,
    },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let scale = match self {
            DistributionSpec::Logistic { scale, .. } => *scale,
            DistributionSpec::Normal { sd, .. } => *sd,
            DistributionSpec::SkewNormal { scale, .. } => *scale,
            DistributionSpec::TruncNormal { sd, .. } => *sd,
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "distribution scale must be a positive real, got {scale}"
            )));
        }
        Ok(())
    }

    /// The closure of the support, with infinite endpoints for the
    /// unbounded families.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DistributionSpec::TruncNormal { mean, sd } => (mean - sd, mean + sd),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Logistic { location, scale } => {
                let z = (x - location) / scale;
                // evaluate on the side that avoids overflow
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            DistributionSpec::Normal { mean, sd } => phi((x - mean) / sd),
            DistributionSpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                (phi(z) - 2.0 * owen_t(z, shape)).clamp(0.0, 1.0)
            }
            DistributionSpec::TruncNormal { mean, sd } => {
                let (lo, hi) = self.support();
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let mass = phi(1.0) - phi(-1.0);
                ((phi((x - mean) / sd) - phi(-1.0)) / mass).clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse CDF. `p = 0` and `p = 1` map to the support endpoints
    /// (infinite for the unbounded families).
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p), "quantile needs p in [0,1], got {p}");
        let (lo, hi) = self.support();
        if p == 0.0 {
            return lo;
        }
        if p == 1.0 {
            return hi;
        }
        match *self {
            DistributionSpec::Logistic { location, scale } => {
                location + scale * (p.ln() - (-p).ln_1p())
            }
            DistributionSpec::Normal { mean, sd } => mean + sd * phi_inv(p),
            DistributionSpec::SkewNormal { .. } => self.skew_normal_quantile(p),
            DistributionSpec::TruncNormal { mean, sd } => {
                let mass = phi(1.0) - phi(-1.0);
                mean + sd * phi_inv(phi(-1.0) + p * mass)
            }
        }
    }

    /// Density; used by the quantile root-finder and the quadrature tests.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Logistic { location, scale } => {
                let z = ((x - location) / scale).abs();
                let e = (-z).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            DistributionSpec::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            DistributionSpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                let base = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                2.0 / scale * base * phi(shape * z)
            }
            DistributionSpec::TruncNormal { mean, sd } => {
                let (lo, hi) = self.support();
                if x < lo || x > hi {
                    return 0.0;
                }
                let z = (x - mean) / sd;
                let base = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                base / (sd * (phi(1.0) - phi(-1.0)))
            }
        }
    }

    /// One draw. The sampling scheme per family is fixed (and documented)
    /// so seeded runs are reproducible: logistic and truncated normal by
    /// inverse CDF from one uniform; normal from one standard normal;
    /// skew-normal from two standard normals via the convolution
    /// representation `delta |u0| + sqrt(1 - delta^2) u1`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Logistic { .. } => {
                let u = positive_uniform(rng);
                self.quantile(u)
            }
            DistributionSpec::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            DistributionSpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                location + scale * (delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1)
            }
            DistributionSpec::TruncNormal { .. } => {
                let u = positive_uniform(rng);
                self.quantile(u)
            }
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Skew-normal quantile by bracketed bisection refined with Newton
    /// steps (the CDF is smooth and strictly increasing).
    fn skew_normal_quantile(&self, p: f64) -> f64 {
        let (location, scale) = match *self {
            DistributionSpec::SkewNormal {
                location, scale, ..
            } => (location, scale),
            _ => unreachable!("skew_normal_quantile on a non-skew-normal spec"),
        };
        let (mut lo, mut hi) = (location - 2.0 * scale, location + 2.0 * scale);
        for _ in 0..200 {
            if self.cdf(lo) < p {
                break;
            }
            lo -= 2.0 * (hi - lo);
        }
        for _ in 0..200 {
            if self.cdf(hi) > p {
                break;
            }
            hi += 2.0 * (hi - lo);
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..60 {
            if self.cdf(x) < p {
                lo = x;
            } else {
                hi = x;
            }
            x = 0.5 * (lo + hi);
            if hi - lo < 1e-9 * scale {
                break;
            }
        }
        // Newton polish inside the final bracket
        for _ in 0..8 {
            let f = self.cdf(x) - p;
            let d = self.pdf(x);
            if d <= 0.0 {
                break;
            }
            let step = f / d;
            let next = x - step;
            if next <= lo || next >= hi {
                break;
            }
            x = next;
            if step.abs() < 1e-14 * scale.max(1.0) {
                break;
            }
        }
        x
    }
}

/// A uniform draw from the open interval (0, 1).
fn positive_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}
