//! Summary ROC geometry: curve, AUC, summary point and confidence /
//! prediction regions for a fitted model.
//!
//! The summary curve is the regression line of transformed sensitivity on
//! transformed false-positive rate, back-transformed to the unit square:
//! for an FPR value `u`,
//!
//! ```text
//! z_q = t_{alpha_q}(u)
//! z_p = mu_p + (sigma / sigma2_q) (z_q - mu_q)
//! sens = t_{alpha_p}^{-1}(z_p)
//! ```
//!
//! With both shapes at 2 this is exactly the Lehmann power curve
//! `sens = fpr^beta`; with both at 1 it is the classical
//! Moses–Shapiro–Littenberg line on the logit scale. Only the
//! between-study covariance enters the slope: within-study sampling noise
//! is measurement error, not structure, and must not steepen the line.
//!
//! Out-of-range back-transforms at the boundary shapes saturate
//! sensitivity to 0 or 1 so the curve is total on (0,1) and can be
//! integrated.

use crate::error::{Error, Result};
use crate::mat2::{Mat2, Vec2};
use crate::model_fit::{Family, FitResult, ModelSpec};
use crate::study_data::Dataset;
use serde::Serialize;

/// Default number of interior FPR grid points for a summary curve.
pub const DEFAULT_GRID_SIZE: usize = 1001;

/// Default number of region boundary points.
pub const DEFAULT_REGION_POINTS: usize = 360;

/// Below this fitted variance along the FPR axis the regression slope is
/// numerically undefined and the curve degenerates to a point.
const MIN_FPR_VARIANCE: f64 = 1e-12;

/// Region boundary points are clamped into this margin of the unit square
/// so downstream plotting on transformed axes stays finite.
const BOUNDARY_MARGIN: f64 = 1e-6;

/// A summary ROC curve evaluated on a fixed FPR grid.
#[derive(Debug, Clone, Serialize)]
pub struct SrocCurve {
    pub spec: ModelSpec,
    /// Ascending interior grid of false-positive rates in (0,1).
    pub fpr_grid: Vec<f64>,
    /// Sensitivity at each grid point, in [0,1].
    pub sens_values: Vec<f64>,
    /// Trapezoid area under the curve, with the grid extended by constant
    /// shelves to the 0 and 1 endpoints.
    pub auc: f64,
}

/// Which region around the summary point to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    /// Uncertainty of the mean: where the true summary point plausibly is.
    Confidence,
    /// Uncertainty of a new study: mean uncertainty plus between-study
    /// heterogeneity.
    Prediction,
}

impl std::fmt::Display for RegionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionKind::Confidence => write!(f, "confidence"),
            RegionKind::Prediction => write!(f, "prediction"),
        }
    }
}

impl std::str::FromStr for RegionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<RegionKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "confidence" => Ok(RegionKind::Confidence),
            "prediction" => Ok(RegionKind::Prediction),
            other => Err(Error::Config(format!(
                "unknown region kind {other:?} (expected confidence or prediction)"
            ))),
        }
    }
}

/// An elliptical region on the transformed scale together with its
/// back-transformed boundary on the unit square.
#[derive(Debug, Clone, Serialize)]
pub struct RegionEllipse {
    pub kind: RegionKind,
    pub level: f64,
    /// Ellipse centre on the transformed scale: the fitted mean.
    pub center: Vec2,
    /// The PSD shape matrix whose level set at the chi-square radius is
    /// traced by the boundary.
    pub shape: Mat2,
    /// Back-transformed boundary as (fpr, sens) pairs, clamped into the
    /// open unit square.
    pub boundary: Vec<(f64, f64)>,
    /// True when the shape matrix needed a numerical ridge repair before
    /// factorization.
    pub repaired: bool,
}

/// The regression slope of the transformed curve, after the degeneracy
/// and convergence preconditions.
fn curve_slope(fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "cannot build a summary curve from a non-converged fit of {}",
            fit.spec
        )));
    }
    if fit.theta.sigma2_q <= MIN_FPR_VARIANCE {
        return Err(Error::DegenerateGeometry(format!(
            "fitted variance along the FPR axis is {:.3e}; the summary line's slope is undefined",
            fit.theta.sigma2_q
        )));
    }
    Ok(fit.theta.sigma / fit.theta.sigma2_q)
}

/// Evaluates the summary curve at a single false-positive rate.
pub fn sens_at(fit: &FitResult, fpr: f64) -> Result<f64> {
    let beta = curve_slope(fit)?;
    let z_q = fit.spec.alphas.q.apply(fpr)?;
    let z_p = fit.theta.mu_p + beta * (z_q - fit.theta.mu_q);
    Ok(fit.spec.alphas.p.inverse_saturating(z_p))
}

/// Builds the summary curve on `grid_size` interior FPR points
/// `u_j = j / (grid_size + 1)`.
pub fn summary_curve(fit: &FitResult, grid_size: usize) -> Result<SrocCurve> {
    if grid_size < 2 {
        return Err(Error::Config(format!(
            "curve grid size must be at least 2, got {grid_size}"
        )));
    }
    let beta = curve_slope(fit)?;
    let denom = (grid_size + 1) as f64;
    let mut fpr_grid = Vec::with_capacity(grid_size);
    let mut sens_values = Vec::with_capacity(grid_size);
    for j in 1..=grid_size {
        let u = j as f64 / denom;
        let z_q = fit.spec.alphas.q.apply(u)?;
        let z_p = fit.theta.mu_p + beta * (z_q - fit.theta.mu_q);
        fpr_grid.push(u);
        sens_values.push(fit.spec.alphas.p.inverse_saturating(z_p));
    }
    let mut curve = SrocCurve {
        spec: fit.spec,
        fpr_grid,
        sens_values,
        auc: f64::NAN,
    };
    curve.auc = auc(&curve);
    Ok(curve)
}

/// Trapezoid area under a stored curve. The interior grid is extended with
/// the endpoints `(0, sens at the first grid point)` and `(1, sens at the
/// last)` so the integral covers the whole FPR range.
pub fn auc(curve: &SrocCurve) -> f64 {
    shelf_trapezoid(&curve.fpr_grid, &curve.sens_values)
}

/// Trapezoid rule on an interior grid of (0,1), extended by constant
/// shelves to the endpoints. Shared by the curve AUC and the simulation
/// harness's integrated-error measure so the two conventions can never
/// drift apart.
pub(crate) fn shelf_trapezoid(u: &[f64], s: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), s.len());
    if u.is_empty() {
        return 0.0;
    }
    let mut area = u[0] * s[0]; // shelf from 0 to the first grid point
    for j in 1..u.len() {
        area += 0.5 * (s[j] + s[j - 1]) * (u[j] - u[j - 1]);
    }
    area += (1.0 - u[u.len() - 1]) * s[s.len() - 1]; // shelf to 1
    area
}

/// The back-transformed fitted mean as an `(fpr, sens)` pair.
///
/// Uses the strict inverse: if a boundary-shape mean lies outside the
/// transform's attainable range the error propagates rather than
/// saturating, because a summary *point* at 0 or 1 is a modelling failure
/// worth surfacing.
pub fn summary_point(fit: &FitResult) -> Result<(f64, f64)> {
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "cannot report a summary point from a non-converged fit of {}",
            fit.spec
        )));
    }
    let sens = fit.spec.alphas.p.inverse(fit.theta.mu_p)?;
    let fpr = fit.spec.alphas.q.inverse(fit.theta.mu_q)?;
    Ok((fpr, sens))
}

/// Two-degree-of-freedom chi-square quantile, used as the squared ellipse
/// radius. The 2-df CDF is `1 - exp(-x/2)`, so the quantile has the closed
/// form `-2 ln(1 - level)`.
fn chi2_quantile_2df(level: f64) -> f64 {
    -2.0 * (1.0 - level).ln()
}

/// Constructs a confidence or prediction region around the summary point.
///
/// The shape is `Var(mu_hat)` for a confidence region — the GLS covariance
/// `(sum_i V_i^{-1})^{-1}` under family 2, `Sigma_hat / N` under family 1 —
/// and `Sigma_hat + Var(mu_hat)` for a prediction region. The boundary is
/// the parametric ellipse at the chi-square radius, back-transformed and
/// clamped into the open unit square.
pub fn region(
    fit: &FitResult,
    data: &Dataset,
    kind: RegionKind,
    level: f64,
    points: usize,
) -> Result<RegionEllipse> {
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "cannot build a region from a non-converged fit of {}",
            fit.spec
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "region level must lie strictly between 0 and 1, got {level}"
        )));
    }
    if points < 3 {
        return Err(Error::Config(format!(
            "a region boundary needs at least 3 points, got {points}"
        )));
    }

    let cov = fit.theta.cov();
    let mean_var = match fit.spec.family {
        Family::One => {
            let n = data.n() as f64;
            Mat2::new(cov.a / n, cov.b / n, cov.c / n, cov.d / n)
        }
        Family::Two => {
            let within = data.within_study_vars(&fit.spec.alphas)?;
            let mut precision = Mat2::ZERO;
            for d in &within {
                precision = precision + (cov + Mat2::diag(d.x, d.y)).ridged_inverse();
            }
            precision.ridged_inverse()
        }
    };
    let shape = match kind {
        RegionKind::Confidence => mean_var,
        RegionKind::Prediction => cov + mean_var,
    };

    let (factor, repaired) = shape.cholesky_repaired();
    let radius = chi2_quantile_2df(level).sqrt();
    let center = fit.theta.mean();
    let hi = 1.0 - BOUNDARY_MARGIN;
    let mut boundary = Vec::with_capacity(points);
    for j in 0..points {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / points as f64;
        let z = center + factor.mul_vec(Vec2::new(angle.cos(), angle.sin())).scale(radius);
        let sens = fit
            .spec
            .alphas
            .p
            .inverse_saturating(z.x)
            .clamp(BOUNDARY_MARGIN, hi);
        let fpr = fit
            .spec
            .alphas
            .q
            .inverse_saturating(z.y)
            .clamp(BOUNDARY_MARGIN, hi);
        boundary.push((fpr, sens));
    }

    Ok(RegionEllipse {
        kind,
        level,
        center,
        shape,
        boundary,
        repaired,
    })
}
