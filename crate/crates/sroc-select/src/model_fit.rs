//! Bivariate random-effects model fitting on the transformed scale.
//!
//! Every candidate model transforms the observed (sensitivity, FPR) pairs
//! with a [`TransformPair`] and assumes the transformed pairs `z_i` are
//! bivariate normal around a common mean with between-study covariance
//! `Sigma`. The two families differ in how sampling noise is handled:
//!
//! * **Family 1** ignores within-study variance: `z_i ~ N(mu, Sigma)`.
//!   Estimates are closed-form sample moments (divisor N for ML, N-1 for
//!   REML) and the best linear unbiased predictors are the observations
//!   themselves.
//! * **Family 2** adds the per-study delta-method variances `D_i` on the
//!   diagonal: `z_i ~ N(mu, Sigma + D_i)`. The variance components are
//!   found numerically in an unconstrained parameterization
//!   `(log sd_p, log sd_q, atanh rho)` with the mean profiled out by
//!   generalized least squares; a multi-start simplex search plus a
//!   coordinate Newton polish keeps the optimum tight.
//!
//! Log-likelihoods are reported on the transformed scale and, via the
//! change-of-variables Jacobian, on the raw rate scale (`loglik_y`), which
//! is what makes models with different transforms comparable.

use crate::error::{Error, Result};
use crate::mat2::{Mat2, Vec2};
use crate::optim::{coordinate_newton_polish, nelder_mead};
use crate::study_data::Dataset;
use crate::transforms::{Alpha, TransformPair, GRID_ALPHAS};
use serde::Serialize;
use std::fmt;

/// Iteration budget for one simplex start.
const MAX_ITER: usize = 2000;
/// Simplex stops once the objective spread falls below this.
const OBJECTIVE_TOL: f64 = 1e-10;
/// Number of deterministic starts for the family-2 search.
const N_STARTS: usize = 5;
/// Floor on `log sd` coordinates: variances may collapse towards zero but
/// the parameterization stays finite.
const LOG_SD_FLOOR: f64 = -15.0;
/// Cap on `|atanh rho|`, i.e. correlations are kept strictly inside (-1, 1).
const ATANH_RHO_CAP: f64 = 12.0;

/// Which marginal structure a candidate model assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// No within-study variance term.
    One,
    /// Within-study delta-method variances added per study.
    Two,
}

impl Family {
    pub fn as_number(self) -> u8 {
        match self {
            Family::One => 1,
            Family::Two => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_number())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Family> {
        match s.trim() {
            "1" => Ok(Family::One),
            "2" => Ok(Family::Two),
            other => Err(Error::Config(format!(
                "family must be 1 or 2, got {other:?}"
            ))),
        }
    }
}

/// Estimation method. REML is the default throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ml,
    Reml,
}

impl Default for Method {
    fn default() -> Self {
        Method::Reml
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ml => write!(f, "ml"),
            Method::Reml => write!(f, "reml"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Method::Ml),
            "reml" => Ok(Method::Reml),
            other => Err(Error::Config(format!(
                "method must be ml or reml, got {other:?}"
            ))),
        }
    }
}

/// One candidate model: a family plus the transform shapes for the two
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSpec {
    pub family: Family,
    pub alphas: TransformPair,
}

impl ModelSpec {
    pub fn new(family: Family, alpha_p: Alpha, alpha_q: Alpha) -> Self {
        ModelSpec {
            family,
            alphas: TransformPair::new(alpha_p, alpha_q),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "family{}({}, {})",
            self.family, self.alphas.p, self.alphas.q
        )
    }
}

/// The default candidate grid: both families crossed with all pairs of
/// grid shapes, in canonical order (family ascending, then `alpha_p`, then
/// `alpha_q` ascending). 50 models in total.
pub fn default_grid() -> Vec<ModelSpec> {
    let alphas: Vec<Alpha> = GRID_ALPHAS
        .iter()
        .map(|&a| Alpha::new(a).expect("grid alpha"))
        .collect();
    grid_from_alphas(&alphas)
}

/// A candidate grid over custom transform shapes, in the same canonical
/// order as [`default_grid`].
pub fn grid_from_alphas(alphas: &[Alpha]) -> Vec<ModelSpec> {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.value().total_cmp(&b.value()));
    sorted.dedup_by(|a, b| a.value() == b.value());
    let mut grid = Vec::with_capacity(2 * sorted.len() * sorted.len());
    for family in [Family::One, Family::Two] {
        for &ap in &sorted {
            for &aq in &sorted {
                grid.push(ModelSpec::new(family, ap, aq));
            }
        }
    }
    grid
}

/// Fitted parameters on the transformed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theta {
    pub mu_p: f64,
    pub mu_q: f64,
    pub sigma2_p: f64,
    pub sigma2_q: f64,
    /// Between-study covariance (off-diagonal of `Sigma`).
    pub sigma: f64,
}

impl Theta {
    pub fn mean(&self) -> Vec2 {
        Vec2::new(self.mu_p, self.mu_q)
    }

    /// Between-study covariance matrix.
    pub fn cov(&self) -> Mat2 {
        Mat2::symmetric(self.sigma2_p, self.sigma2_q, self.sigma)
    }
}

/// A completed model fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub method: Method,
    pub theta: Theta,
    /// Gaussian log-likelihood of the transformed points at `theta`.
    pub loglik_transformed: f64,
    /// Log-likelihood on the raw rate scale: `loglik_transformed` plus the
    /// summed log-Jacobian of the transform.
    pub loglik_y: f64,
    /// The restricted (REML) objective evaluated at `theta`.
    pub restricted_loglik: f64,
    /// Best linear unbiased predictors of the per-study transformed pairs.
    pub blups: Vec<Vec2>,
    pub converged: bool,
    pub iterations: usize,
}

/// A fit on the transformed scale only, before Jacobian bookkeeping.
#[derive(Debug, Clone)]
pub struct RawFit {
    pub theta: Theta,
    pub loglik_transformed: f64,
    pub restricted_loglik: f64,
    pub blups: Vec<Vec2>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits a candidate model to a dataset.
pub fn fit_model(data: &Dataset, spec: ModelSpec, method: Method) -> Result<FitResult> {
    match spec.family {
        Family::One => fit_family1(data, spec.alphas, method),
        Family::Two => fit_family2(data, spec.alphas, method),
    }
}

/// Family-1 fit (closed-form sample moments).
pub fn fit_family1(data: &Dataset, pair: TransformPair, method: Method) -> Result<FitResult> {
    let z = data.transformed(&pair)?;
    let raw = fit_family1_raw(&z, method)?;
    assemble(ModelSpec::new(Family::One, pair.p, pair.q), method, raw, data)
}

/// Family-2 fit (numerical variance components with profiled GLS mean).
pub fn fit_family2(data: &Dataset, pair: TransformPair, method: Method) -> Result<FitResult> {
    let z = data.transformed(&pair)?;
    let d = data.within_study_vars(&pair)?;
    let raw = fit_family2_raw(&z, &d, method)?;
    assemble(ModelSpec::new(Family::Two, pair.p, pair.q), method, raw, data)
}

fn assemble(
    spec: ModelSpec,
    method: Method,
    raw: RawFit,
    data: &Dataset,
) -> Result<FitResult> {
    let mut jac = 0.0;
    for pt in data.points() {
        jac += spec.alphas.log_jacobian(pt.sens, pt.fpr)?;
    }
    Ok(FitResult {
        spec,
        method,
        theta: raw.theta,
        loglik_transformed: raw.loglik_transformed,
        loglik_y: raw.loglik_transformed + jac,
        restricted_loglik: raw.restricted_loglik,
        blups: raw.blups,
        converged: raw.converged,
        iterations: raw.iterations,
    })
}

/// Family-1 fit from already-transformed points. Exposed for callers that
/// construct the transformed scale themselves (tests, diagnostics).
pub fn fit_family1_raw(z: &[Vec2], method: Method) -> Result<RawFit> {
    let n = z.len();
    check_size(n)?;
    let nf = n as f64;
    let mut mean = Vec2::ZERO;
    for zi in z {
        mean = mean + *zi;
    }
    mean = mean.scale(1.0 / nf);

    let mut scatter = Mat2::ZERO;
    let mut spread = 0.0_f64;
    for zi in z {
        let r = *zi - mean;
        scatter = scatter + r.outer(r);
        spread = spread.max(r.norm_inf());
    }
    if spread < 1e-12 {
        return Err(Error::DegenerateData(
            "all transformed points are identical; no between-study structure to fit".into(),
        ));
    }
    let divisor = match method {
        Method::Ml => nf,
        Method::Reml => nf - 1.0,
    };
    let cov = Mat2::new(
        scatter.a / divisor,
        scatter.b / divisor,
        scatter.c / divisor,
        scatter.d / divisor,
    );
    let theta = Theta {
        mu_p: mean.x,
        mu_q: mean.y,
        sigma2_p: cov.a,
        sigma2_q: cov.d,
        sigma: cov.b,
    };
    let vs: Vec<Mat2> = vec![cov; n];
    Ok(RawFit {
        theta,
        loglik_transformed: marginal_loglik(z, mean, &vs),
        restricted_loglik: reml_objective(z, &vs).0,
        blups: z.to_vec(),
        converged: true,
        iterations: 0,
    })
}

/// Family-2 fit from already-transformed points and within-study variances
/// (`within[i]` holds the diagonal of `D_i`).
pub fn fit_family2_raw(z: &[Vec2], within: &[Vec2], method: Method) -> Result<RawFit> {
    check_size(z.len())?;
    if within.len() != z.len() {
        return Err(Error::Config(format!(
            "{} within-study variances for {} studies",
            within.len(),
            z.len()
        )));
    }
    // deterministic multi-start: family-1 moments, then fixed perturbations
    let starts = family2_starts(z, method)?;
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut iterations = 0;
    for start in starts {
        let objective = |v: &[f64]| -f64_objective(v, z, within, method);
        let run = nelder_mead(objective, &start, 0.25, OBJECTIVE_TOL, MAX_ITER);
        let (x, fval, sweeps) =
            coordinate_newton_polish(objective, &run.x, 1e-5, 1e-11, 50);
        iterations += run.iterations + sweeps;
        let better = match &best {
            None => true,
            Some((_, best_f, _)) => fval < *best_f,
        };
        if better {
            best = Some((x, fval, run.converged));
        }
    }
    let (v, _, converged) = best.expect("at least one start");
    Ok(finish_family2(&v, z, within, converged, iterations))
}

/// Single-start family-2 refit from a warm parameter vector; used by the
/// finite-difference degrees-of-freedom computation where the data moves
/// only infinitesimally.
pub(crate) fn fit_family2_warm(
    z: &[Vec2],
    within: &[Vec2],
    method: Method,
    warm: [f64; 3],
) -> Result<RawFit> {
    check_size(z.len())?;
    let objective = |v: &[f64]| -f64_objective(v, z, within, method);
    let run = nelder_mead(objective, &warm, 0.02, OBJECTIVE_TOL, MAX_ITER);
    let (x, _, sweeps) = coordinate_newton_polish(objective, &run.x, 1e-5, 1e-11, 50);
    Ok(finish_family2(
        &x,
        z,
        within,
        run.converged,
        run.iterations + sweeps,
    ))
}

/// The unconstrained coordinates of a fitted covariance, for warm restarts.
pub(crate) fn theta_to_coords(theta: &Theta) -> [f64; 3] {
    let sd_p = theta.sigma2_p.max(0.0).sqrt();
    let sd_q = theta.sigma2_q.max(0.0).sqrt();
    let rho = if sd_p > 0.0 && sd_q > 0.0 {
        (theta.sigma / (sd_p * sd_q)).clamp(-0.999_999, 0.999_999)
    } else {
        0.0
    };
    [
        sd_p.max(1e-12).ln().max(LOG_SD_FLOOR),
        sd_q.max(1e-12).ln().max(LOG_SD_FLOOR),
        rho.atanh().clamp(-ATANH_RHO_CAP, ATANH_RHO_CAP),
    ]
}

fn family2_starts(z: &[Vec2], method: Method) -> Result<Vec<Vec<f64>>> {
    let moments = fit_family1_raw(z, method)?;
    let base = theta_to_coords(&moments.theta);
    let rho_half = 0.5_f64.atanh();
    let mut starts = Vec::with_capacity(N_STARTS);
    starts.push(base.to_vec());
    for (dsd, rho) in [
        (0.5, rho_half),
        (0.5, -rho_half),
        (-0.5, rho_half),
        (-0.5, -rho_half),
    ] {
        starts.push(vec![base[0] + dsd, base[1] + dsd, rho]);
    }
    Ok(starts)
}

/// Decodes the unconstrained coordinates into a covariance matrix.
fn coords_to_cov(v: &[f64]) -> Mat2 {
    let sd_p = v[0].max(LOG_SD_FLOOR).exp();
    let sd_q = v[1].max(LOG_SD_FLOOR).exp();
    let rho = v[2].clamp(-ATANH_RHO_CAP, ATANH_RHO_CAP).tanh();
    Mat2::symmetric(sd_p * sd_p, sd_q * sd_q, rho * sd_p * sd_q)
}

/// Profile objective for the family-2 search: the chosen method's marginal
/// or restricted log-likelihood with the mean replaced by its GLS value.
fn f64_objective(v: &[f64], z: &[Vec2], within: &[Vec2], method: Method) -> f64 {
    let cov = coords_to_cov(v);
    if !cov.is_finite() {
        return f64::NEG_INFINITY;
    }
    let vs: Vec<Mat2> = within
        .iter()
        .map(|d| cov + Mat2::diag(d.x, d.y))
        .collect();
    match method {
        Method::Ml => {
            let (mean, _) = gls_mean(z, &vs);
            marginal_loglik(z, mean, &vs)
        }
        Method::Reml => reml_objective(z, &vs).0,
    }
}

fn finish_family2(
    v: &[f64],
    z: &[Vec2],
    within: &[Vec2],
    converged: bool,
    iterations: usize,
) -> RawFit {
    let cov = coords_to_cov(v);
    let vs: Vec<Mat2> = within
        .iter()
        .map(|d| cov + Mat2::diag(d.x, d.y))
        .collect();
    let (mean, _) = gls_mean(z, &vs);
    let theta = Theta {
        mu_p: mean.x,
        mu_q: mean.y,
        sigma2_p: cov.a,
        sigma2_q: cov.d,
        sigma: cov.b,
    };
    let blups = blups_for(&theta, z, within);
    RawFit {
        theta,
        loglik_transformed: marginal_loglik(z, mean, &vs),
        restricted_loglik: reml_objective(z, &vs).0,
        blups,
        converged,
        iterations,
    }
}

/// Best linear unbiased predictors for given parameters and data:
/// `zhat_i = mu + Sigma (Sigma + D_i)^{-1} (z_i - mu)`.
pub(crate) fn blups_for(theta: &Theta, z: &[Vec2], within: &[Vec2]) -> Vec<Vec2> {
    let cov = theta.cov();
    let mu = theta.mean();
    z.iter()
        .zip(within)
        .map(|(zi, d)| {
            let w = (cov + Mat2::diag(d.x, d.y)).ridged_inverse();
            mu + (cov * w).mul_vec(*zi - mu)
        })
        .collect()
}

/// Recomputes the BLUPs of a fit against a dataset. For family 1 these are
/// the transformed observations themselves.
pub fn blup(fit: &FitResult, data: &Dataset) -> Result<Vec<Vec2>> {
    let z = data.transformed(&fit.spec.alphas)?;
    match fit.spec.family {
        Family::One => Ok(z),
        Family::Two => {
            let d = data.within_study_vars(&fit.spec.alphas)?;
            Ok(blups_for(&fit.theta, &z, &d))
        }
    }
}

/// Conditional log-likelihood of the observations given the fitted BLUPs:
/// the sum over studies of `log N(z_i; zhat_i, D_i)`, with the within-study
/// variances taken from the data. With `with_jacobian` the summed
/// log-Jacobian is added so the value lives on the raw rate scale.
pub fn conditional_loglik(fit: &FitResult, data: &Dataset, with_jacobian: bool) -> Result<f64> {
    let z = data.transformed(&fit.spec.alphas)?;
    let d = data.within_study_vars(&fit.spec.alphas)?;
    let mut total = 0.0;
    for ((zi, di), zhat) in z.iter().zip(&d).zip(&fit.blups) {
        if di.x <= 0.0 || di.y <= 0.0 {
            return Err(Error::DegenerateData(
                "conditional likelihood undefined: a within-study variance is zero".into(),
            ));
        }
        let r = *zi - *zhat;
        total += -(2.0 * std::f64::consts::PI).ln()
            - 0.5 * (di.x * di.y).ln()
            - 0.5 * (r.x * r.x / di.x + r.y * r.y / di.y);
    }
    if with_jacobian {
        for pt in data.points() {
            total += fit.spec.alphas.log_jacobian(pt.sens, pt.fpr)?;
        }
    }
    Ok(total)
}

/// The marginal log-likelihood formula of the fitted model evaluated with
/// the observations replaced by their BLUPs. Provided for auditing
/// alternative conditional-information constructions (the difference
/// `loglik_transformed - marginal_loglik_at_blups` is one such variant);
/// the selection criteria themselves use [`conditional_loglik`].
pub fn marginal_loglik_at_blups(fit: &FitResult, data: &Dataset) -> Result<f64> {
    let cov = fit.theta.cov();
    let mu = fit.theta.mean();
    let vs: Vec<Mat2> = match fit.spec.family {
        Family::One => vec![cov; data.n()],
        Family::Two => data
            .within_study_vars(&fit.spec.alphas)?
            .iter()
            .map(|d| cov + Mat2::diag(d.x, d.y))
            .collect(),
    };
    Ok(marginal_loglik(&fit.blups, mu, &vs))
}

// ---------------------------------------------------------------------------
// shared Gaussian building blocks
// ---------------------------------------------------------------------------

/// GLS mean and the precision sum it comes from:
/// `mu = (sum W_i)^{-1} sum W_i z_i` with `W_i = V_i^{-1}`.
pub(crate) fn gls_mean(z: &[Vec2], vs: &[Mat2]) -> (Vec2, Mat2) {
    let mut w_sum = Mat2::ZERO;
    let mut wz_sum = Vec2::ZERO;
    for (zi, v) in z.iter().zip(vs) {
        let w = v.ridged_inverse();
        w_sum = w_sum + w;
        wz_sum = wz_sum + w.mul_vec(*zi);
    }
    (w_sum.ridged_inverse().mul_vec(wz_sum), w_sum)
}

/// Full Gaussian log-likelihood `sum_i log N(z_i; mu, V_i)`.
pub(crate) fn marginal_loglik(z: &[Vec2], mu: Vec2, vs: &[Mat2]) -> f64 {
    let mut total = 0.0;
    for (zi, v) in z.iter().zip(vs) {
        let w = v.ridged_inverse();
        total += -(2.0 * std::f64::consts::PI).ln()
            - 0.5 * v.ridged_log_det()
            - 0.5 * w.quad_form(*zi - mu);
    }
    total
}

/// Restricted likelihood objective
/// `-1/2 [ sum log|V_i| + log|sum V_i^{-1}| + sum (z_i - mu)' V_i^{-1} (z_i - mu) ]`
/// with the GLS mean profiled in. Returns the objective and that mean.
pub(crate) fn reml_objective(z: &[Vec2], vs: &[Mat2]) -> (f64, Vec2) {
    let (mean, w_sum) = gls_mean(z, vs);
    let mut log_dets = 0.0;
    let mut quad = 0.0;
    for (zi, v) in z.iter().zip(vs) {
        log_dets += v.ridged_log_det();
        quad += v.ridged_inverse().quad_form(*zi - mean);
    }
    (-0.5 * (log_dets + w_sum.ridged_log_det() + quad), mean)
}

fn check_size(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Input(format!(
            "model fitting needs at least 3 studies, got {n}"
        )));
    }
    Ok(())
}
