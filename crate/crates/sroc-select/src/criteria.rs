//! Model-selection criteria and selection across the candidate grid.
//!
//! Six criteria are implemented. Four are likelihood-based:
//!
//! * `aic` — marginal AIC on the raw rate scale (log-likelihood plus the
//!   transform's log-Jacobian), penalty `2k` with `k = 5`;
//! * `aic-noj` — the same without the Jacobian term, i.e. naively on the
//!   transformed scale (kept as a deliberately broken reference point:
//!   values of differently transformed models are not comparable);
//! * `caic-vb` — conditional AIC: conditional log-likelihood given the
//!   BLUPs plus twice the effective degrees of freedom, computed
//!   analytically as the trace of the prediction hat matrix at the fitted
//!   covariance;
//! * `caic-gk` — the same conditional AIC but with the degrees of freedom
//!   measured by finite differences with refitting, so the penalty also
//!   charges for the estimated variance components.
//!
//! Two are empirical-likelihood statistics on the raw rates, free of any
//! Gaussian assumption:
//!
//! * `el-fix` — the EL ratio statistic for the hypothesis that the common
//!   rate pair equals the back-transformed fitted mean;
//! * `el-blup` — the same statistic with the fixed mean replaced by the
//!   per-study back-transformed BLUPs, so the constraint tests the whole
//!   fitted structure rather than the centre alone. For family-1 fits the
//!   BLUPs are the observations themselves, and the fixed-mean constraint
//!   is kept instead.
//!
//! Lower is better for every criterion. Non-converged fits and infeasible
//! EL problems score `+inf` and sort last.

use crate::error::{Error, Result};
use crate::mat2::{Mat2, Vec2};
use crate::model_fit::{
    conditional_loglik, fit_family2_warm, fit_model, theta_to_coords, Family, FitResult, Method,
    ModelSpec,
};
use crate::study_data::Dataset;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Every candidate model has five parameters: two means, two variances and
/// a covariance.
pub const PARAM_COUNT: f64 = 5.0;

/// Newton iteration cap for the empirical-likelihood dual.
const EL_MAX_ITER: usize = 50;

/// The implemented selection criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Aic,
    AicNoJ,
    CaicVb,
    CaicGk,
    ElFix,
    ElBlup,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 6] = [
        CriterionKind::AicNoJ,
        CriterionKind::Aic,
        CriterionKind::CaicVb,
        CriterionKind::CaicGk,
        CriterionKind::ElFix,
        CriterionKind::ElBlup,
    ];
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CriterionKind::Aic => "aic",
            CriterionKind::AicNoJ => "aic-noj",
            CriterionKind::CaicVb => "caic-vb",
            CriterionKind::CaicGk => "caic-gk",
            CriterionKind::ElFix => "el-fix",
            CriterionKind::ElBlup => "el-blup",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<CriterionKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aic" => Ok(CriterionKind::Aic),
            "aic-noj" => Ok(CriterionKind::AicNoJ),
            "caic-vb" => Ok(CriterionKind::CaicVb),
            "caic-gk" => Ok(CriterionKind::CaicGk),
            "el-fix" => Ok(CriterionKind::ElFix),
            "el-blup" => Ok(CriterionKind::ElBlup),
            other => Err(Error::Config(format!(
                "unknown criterion {other:?} (expected aic, aic-noj, caic-vb, caic-gk, el-fix or el-blup)"
            ))),
        }
    }
}

/// One candidate's criterion value.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionScore {
    pub spec: ModelSpec,
    pub kind: CriterionKind,
    /// The criterion value; `+inf` for non-converged or infeasible
    /// candidates.
    pub value: f64,
    pub feasible: bool,
}

// ---------------------------------------------------------------------------
// empirical likelihood
// ---------------------------------------------------------------------------

/// Solution of the empirical-likelihood inner problem for constraint
/// vectors `u_i`: maximize `sum log w_i` over probability weights with
/// `sum w_i u_i = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct ElSolution {
    /// The maximizing weights (empty when infeasible).
    pub weights: Vec<f64>,
    /// The dual multiplier; weights satisfy `w_i = 1 / (N (1 + lambda'u_i))`.
    pub lambda: Vec2,
    /// `-2 log` likelihood ratio, `2 sum log(1 + lambda'u_i)`; `+inf` when
    /// the origin is not an interior point of the constraint hull.
    pub r_statistic: f64,
    pub feasible: bool,
}

impl ElSolution {
    fn infeasible() -> ElSolution {
        ElSolution {
            weights: Vec::new(),
            lambda: Vec2::ZERO,
            r_statistic: f64::INFINITY,
            feasible: false,
        }
    }
}

/// Owen's pseudo-logarithm: `log` above `eps`, quadratically extended
/// below so the dual objective is defined (and convex) everywhere.
fn pseudo_log(v: f64, eps: f64) -> (f64, f64, f64) {
    if v >= eps {
        (v.ln(), 1.0 / v, -1.0 / (v * v))
    } else {
        let r = (v - eps) / eps;
        (eps.ln() + r - 0.5 * r * r, (1.0 - r) / eps, -1.0 / (eps * eps))
    }
}

/// Strict linear-separability pre-check: returns true when all (non-zero)
/// constraint vectors fit in an open half-plane, which makes the origin
/// exterior to their hull and the EL problem infeasible.
fn strictly_separable(u: &[Vec2], scale: f64) -> bool {
    let mut angles: Vec<f64> = u
        .iter()
        .filter(|v| v.norm() > 1e-13 * scale)
        .map(|v| v.y.atan2(v.x))
        .collect();
    if angles.is_empty() {
        return false; // everything at the origin: trivially feasible
    }
    angles.sort_by(f64::total_cmp);
    let mut max_gap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap > std::f64::consts::PI + 1e-12
}

/// Solves the empirical-likelihood problem for bivariate constraint
/// vectors via the convex dual: `lambda` minimizes
/// `-sum log*(1 + lambda'u_i)` by damped Newton iteration.
pub fn el_solve(u: &[Vec2]) -> ElSolution {
    let n = u.len();
    if n == 0 {
        return ElSolution::infeasible();
    }
    let nf = n as f64;
    let scale = u.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    if scale < 1e-14 {
        // all constraint vectors vanish: uniform weights already solve it
        return ElSolution {
            weights: vec![1.0 / nf; n],
            lambda: Vec2::ZERO,
            r_statistic: 0.0,
            feasible: true,
        };
    }
    if strictly_separable(u, scale) {
        return ElSolution::infeasible();
    }

    let eps = 1.0 / nf;
    let objective = |lambda: Vec2| -> f64 {
        -u.iter()
            .map(|ui| pseudo_log(1.0 + lambda.dot(*ui), eps).0)
            .sum::<f64>()
    };

    let eval = |lambda: Vec2| -> (Vec2, Mat2) {
        let mut grad = Vec2::ZERO;
        let mut hess = Mat2::ZERO;
        for ui in u {
            let (_, d1, d2) = pseudo_log(1.0 + lambda.dot(*ui), eps);
            grad = grad + ui.scale(-d1);
            hess = hess + ui.outer(*ui).scale_mat(-d2);
        }
        (grad, hess)
    };

    let mut lambda = Vec2::ZERO;
    let mut fval = objective(lambda);
    let grad_tol = 1e-12 * nf.max(u.iter().map(|v| v.norm()).sum::<f64>());
    let mut converged = false;
    for _ in 0..EL_MAX_ITER {
        let (grad, hess) = eval(lambda);
        if grad.norm_inf() <= grad_tol {
            converged = true;
            break;
        }
        let step = hess.ridged_inverse().mul_vec(grad).scale(-1.0);
        // step halving keeps the damped iteration monotone
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = lambda + step.scale(t);
            let ft = objective(trial);
            if ft < fval {
                lambda = trial;
                fval = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // descent is exhausted at f64 resolution; polish below
            break;
        }
    }
    if !converged {
        // Strict descent stalls once the objective is flat to its last
        // bit, typically with the gradient still around 1e-8. Pure Newton
        // steps keep contracting the gradient quadratically even there,
        // so a short unguarded polish reaches the tolerance the primal
        // identity checks below are calibrated for.
        for _ in 0..8 {
            let (grad, hess) = eval(lambda);
            let gnorm = grad.norm_inf();
            if gnorm <= grad_tol {
                converged = true;
                break;
            }
            let trial = lambda + hess.ridged_inverse().mul_vec(grad).scale(-1.0);
            if u.iter().any(|ui| 1.0 + trial.dot(*ui) <= 0.0)
                || eval(trial).0.norm_inf() >= gnorm
            {
                break;
            }
            lambda = trial;
        }
        converged = converged || eval(lambda).0.norm_inf() <= grad_tol;
    }

    let margins: Vec<f64> = u.iter().map(|ui| 1.0 + lambda.dot(*ui)).collect();
    if !converged || margins.iter().any(|&v| v <= 0.5 / nf) {
        return ElSolution::infeasible();
    }
    let weights: Vec<f64> = margins.iter().map(|v| 1.0 / (nf * v)).collect();
    // double-check the primal identities before declaring feasibility
    let wsum: f64 = weights.iter().sum();
    let mut moment = Vec2::ZERO;
    for (w, ui) in weights.iter().zip(u) {
        moment = moment + ui.scale(*w);
    }
    if (wsum - 1.0).abs() > 1e-10 || moment.norm() > 1e-8 * scale.max(1.0) {
        return ElSolution::infeasible();
    }
    let r = 2.0 * margins.iter().map(|v| v.ln()).sum::<f64>();
    ElSolution {
        weights,
        lambda,
        r_statistic: r.max(0.0),
        feasible: true,
    }
}

// ---------------------------------------------------------------------------
// likelihood criteria
// ---------------------------------------------------------------------------

/// Marginal AIC, `-2 loglik + 2k`. With `with_jacobian` the rate-scale
/// log-likelihood is used (the comparable one); without it the raw
/// transformed-scale value (the `aic-noj` reference).
pub fn score_aic(fit: &FitResult, with_jacobian: bool) -> f64 {
    let ll = if with_jacobian {
        fit.loglik_y
    } else {
        fit.loglik_transformed
    };
    -2.0 * ll + 2.0 * PARAM_COUNT
}

/// Small-sample corrected AIC. The correction `2k(k+1)/(N-k-1)` is the
/// same for every candidate (k is constant across the grid), so it can
/// never change which model is selected — it is provided for reporting.
pub fn score_aicc(fit: &FitResult, n_studies: usize) -> f64 {
    score_aic(fit, true)
        + 2.0 * PARAM_COUNT * (PARAM_COUNT + 1.0) / (n_studies as f64 - PARAM_COUNT - 1.0)
}

/// Which degrees-of-freedom estimate the conditional AIC uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaicVariant {
    /// Analytic hat-matrix trace at the fitted covariance.
    Vb,
    /// Numerical sensitivity of the predictions to the data, including the
    /// variance components' dependence, by central differences with
    /// refitting.
    Gk,
}

/// Analytic effective degrees of freedom: the trace of the linear map
/// from observations to predictions at a fixed covariance `Sigma`,
/// using `dzhat_i/dz_j = (I - Sigma W_i) A W_j + [i=j] Sigma W_i` with
/// `W_i = (Sigma + D_i)^{-1}` and `A = (sum W_j)^{-1}`.
pub fn vb_penalty(cov: Mat2, within: &[Vec2]) -> f64 {
    let ws: Vec<Mat2> = within
        .iter()
        .map(|d| (cov + Mat2::diag(d.x, d.y)).ridged_inverse())
        .collect();
    let mut w_sum = Mat2::ZERO;
    for w in &ws {
        w_sum = w_sum + *w;
    }
    let a = w_sum.ridged_inverse();
    let eye = Mat2::identity();
    ws.iter()
        .map(|w| {
            let shrink = cov * *w;
            (((eye - shrink) * a) * *w + shrink).trace()
        })
        .sum()
}

/// Finite-difference effective degrees of freedom: perturb each coordinate
/// of each transformed observation by `+/-h` (`h` = 1e-4 of that
/// coordinate's spread), refit from the unperturbed optimum, and sum the
/// diagonal sensitivities of the predictions. Errors if any refit fails to
/// converge.
pub fn gk_penalty(fit: &FitResult, data: &Dataset) -> Result<f64> {
    let z = data.transformed(&fit.spec.alphas)?;
    let d = data.within_study_vars(&fit.spec.alphas)?;
    let n = z.len();
    let warm = theta_to_coords(&fit.theta);

    let spread = |pick: fn(&Vec2) -> f64| -> f64 {
        let mean = z.iter().map(pick).sum::<f64>() / n as f64;
        (z.iter().map(|v| (pick(v) - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    let h = Vec2::new(
        (1e-4 * spread(|v| v.x)).max(1e-8),
        (1e-4 * spread(|v| v.y)).max(1e-8),
    );

    let predict = |z_pert: &[Vec2], i: usize, coord: usize| -> Result<f64> {
        let refit = fit_family2_warm(z_pert, &d, fit.method, warm)?;
        if !refit.converged {
            return Err(Error::NonConvergence(format!(
                "degrees-of-freedom refit for study {i} did not converge"
            )));
        }
        Ok(if coord == 0 {
            refit.blups[i].x
        } else {
            refit.blups[i].y
        })
    };

    let mut trace = 0.0;
    for i in 0..n {
        for coord in 0..2 {
            let hc = if coord == 0 { h.x } else { h.y };
            let mut plus = z.clone();
            let mut minus = z.clone();
            if coord == 0 {
                plus[i].x += hc;
                minus[i].x -= hc;
            } else {
                plus[i].y += hc;
                minus[i].y -= hc;
            }
            trace += (predict(&plus, i, coord)? - predict(&minus, i, coord)?) / (2.0 * hc);
        }
    }
    Ok(trace)
}

/// Conditional AIC. For family-1 fits both variants coincide exactly with
/// the marginal AIC: the predictions are the observations, so conditioning
/// adds nothing and the criterion falls back to the marginal form.
pub fn score_caic(fit: &FitResult, data: &Dataset, variant: CaicVariant) -> Result<f64> {
    if fit.spec.family == Family::One {
        return Ok(score_aic(fit, true));
    }
    let cond = conditional_loglik(fit, data, true)?;
    let rho = match variant {
        CaicVariant::Vb => vb_penalty(fit.theta.cov(), &data.within_study_vars(&fit.spec.alphas)?),
        CaicVariant::Gk => gk_penalty(fit, data)?,
    };
    Ok(-2.0 * cond + 2.0 * rho)
}

// ---------------------------------------------------------------------------
// empirical-likelihood criteria
// ---------------------------------------------------------------------------

/// EL statistic for the fixed summary point: constraint vectors are the
/// observed rate pairs minus the back-transformed fitted mean.
pub fn score_el_fix(fit: &FitResult, data: &Dataset) -> ElSolution {
    let target = Vec2::new(
        fit.spec.alphas.p.inverse_saturating(fit.theta.mu_p),
        fit.spec.alphas.q.inverse_saturating(fit.theta.mu_q),
    );
    let u: Vec<Vec2> = data.points().iter().map(|pt| pt.rates() - target).collect();
    el_solve(&u)
}

/// EL statistic against the per-study predictions: constraint vectors are
/// the observed rates minus the back-transformed BLUPs. Family-1 fits keep
/// the fixed-mean constraint (their BLUPs reproduce the observations and
/// would make the statistic vacuously zero).
pub fn score_el_blup(fit: &FitResult, data: &Dataset) -> ElSolution {
    if fit.spec.family == Family::One {
        return score_el_fix(fit, data);
    }
    let u: Vec<Vec2> = data
        .points()
        .iter()
        .zip(&fit.blups)
        .map(|(pt, zhat)| {
            let yhat = Vec2::new(
                fit.spec.alphas.p.inverse_saturating(zhat.x),
                fit.spec.alphas.q.inverse_saturating(zhat.y),
            );
            pt.rates() - yhat
        })
        .collect();
    el_solve(&u)
}

// ---------------------------------------------------------------------------
// scoring and selection
// ---------------------------------------------------------------------------

/// Scores one fitted candidate under one criterion. Non-converged fits
/// and infeasible EL problems yield a `+inf` sentinel with
/// `feasible = false` rather than an error; selection then simply sorts
/// them last.
pub fn score(fit: &FitResult, data: &Dataset, kind: CriterionKind) -> CriterionScore {
    let sentinel = |spec| CriterionScore {
        spec,
        kind,
        value: f64::INFINITY,
        feasible: false,
    };
    if !fit.converged {
        return sentinel(fit.spec);
    }
    let (value, feasible) = match kind {
        CriterionKind::Aic => (score_aic(fit, true), true),
        CriterionKind::AicNoJ => (score_aic(fit, false), true),
        CriterionKind::CaicVb | CriterionKind::CaicGk => {
            let variant = if kind == CriterionKind::CaicVb {
                CaicVariant::Vb
            } else {
                CaicVariant::Gk
            };
            match score_caic(fit, data, variant) {
                Ok(v) => (v, true),
                Err(_) => (f64::INFINITY, false),
            }
        }
        CriterionKind::ElFix => {
            let el = score_el_fix(fit, data);
            (el.r_statistic, el.feasible)
        }
        CriterionKind::ElBlup => {
            let el = score_el_blup(fit, data);
            (el.r_statistic, el.feasible)
        }
    };
    if !value.is_finite() {
        return sentinel(fit.spec);
    }
    CriterionScore {
        spec: fit.spec,
        kind,
        value,
        feasible,
    }
}

/// Fits every candidate in `grid`, in parallel, preserving grid order.
/// Per-candidate failures are kept as errors so callers can decide how to
/// report them.
pub fn fit_grid(
    data: &Dataset,
    grid: &[ModelSpec],
    method: Method,
) -> Vec<Result<FitResult>> {
    grid.par_iter()
        .map(|spec| fit_model(data, *spec, method))
        .collect()
}

/// Deterministic ordering for scored candidates: ascending value, ties
/// broken by family, then `alpha_p`, then `alpha_q`.
pub(crate) fn score_order(a: &CriterionScore, b: &CriterionScore) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.spec.family.as_number().cmp(&b.spec.family.as_number()))
        .then(a.spec.alphas.p.value().total_cmp(&b.spec.alphas.p.value()))
        .then(a.spec.alphas.q.value().total_cmp(&b.spec.alphas.q.value()))
}

/// Sorts scores into ranking order and verifies something is selectable.
pub(crate) fn rank_scores(mut scores: Vec<CriterionScore>) -> Result<Vec<CriterionScore>> {
    scores.sort_by(score_order);
    match scores.first() {
        Some(best) if best.feasible => Ok(scores),
        _ => Err(Error::NoSelectableModel(
            "every candidate was non-converged or infeasible".into(),
        )),
    }
}

/// Fits and scores every candidate in `grid` under `kind`, returning the
/// full ranking (best first). Candidates whose fit itself errors are kept
/// as `+inf` sentinels; the call only fails when *nothing* is selectable.
pub fn select(
    data: &Dataset,
    grid: &[ModelSpec],
    kind: CriterionKind,
    method: Method,
) -> Result<Vec<CriterionScore>> {
    let fits = fit_grid(data, grid, method);
    let scores: Vec<CriterionScore> = grid
        .iter()
        .zip(&fits)
        .map(|(spec, fit)| match fit {
            Ok(f) => score(f, data, kind),
            Err(_) => CriterionScore {
                spec: *spec,
                kind,
                value: f64::INFINITY,
                feasible: false,
            },
        })
        .collect();
    rank_scores(scores)
}

impl Mat2 {
    /// Scales every entry; local helper for Hessian accumulation.
    fn scale_mat(self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}
