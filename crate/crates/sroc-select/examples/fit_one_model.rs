//! Fit a single bivariate random-effects model to a meta-analysis of
//! diagnostic 2x2 tables and inspect its estimates and study-level BLUPs.
//!
//! The model here is family 2 (within-study sampling noise added to the
//! between-study covariance) with the logit transform on both axes — the
//! classical bivariate logit-normal meta-analysis model.
//!
//! Run with: cargo run --example fit_one_model

use sroc_select::model_fit::{fit_model, Family, Method, ModelSpec};
use sroc_select::study_data::{read_dataset, CorrectionPolicy, Dataset};
use sroc_select::transforms::Alpha;
use std::path::Path;

fn main() -> sroc_select::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_studies.csv");
    let tables = read_dataset(&path)?;
    let data = Dataset::from_tables(&tables, CorrectionPolicy::Half)?;
    println!("loaded {} studies from {}", data.n(), path.display());

    let spec = ModelSpec::new(Family::Two, Alpha::new(1.0)?, Alpha::new(1.0)?);
    let fit = fit_model(&data, spec, Method::Reml)?;

    println!("\nmodel {spec}, method reml");
    println!("  converged           {}", fit.converged);
    println!("  mean (z_p, z_q)     ({:.4}, {:.4})", fit.theta.mu_p, fit.theta.mu_q);
    println!("  variance of z_p     {:.4}", fit.theta.sigma2_p);
    println!("  variance of z_q     {:.4}", fit.theta.sigma2_q);
    println!("  covariance          {:.4}", fit.theta.sigma);
    println!("  log-likelihood (y)  {:.4}", fit.loglik_y);

    // the pooled operating point on the probability scale
    let sens = spec.alphas.p.inverse_saturating(fit.theta.mu_p);
    let fpr = spec.alphas.q.inverse_saturating(fit.theta.mu_q);
    println!("  pooled (fpr, sens)  ({fpr:.4}, {sens:.4})");

    println!("\nper-study shrinkage (observed -> BLUP, probability scale):");
    println!("  {:<16} {:>14} {:>14}", "study", "sens", "fpr");
    for ((label, point), z) in data.labels().iter().zip(data.points()).zip(&fit.blups) {
        let sens_hat = spec.alphas.p.inverse_saturating(z.x);
        let fpr_hat = spec.alphas.q.inverse_saturating(z.y);
        println!(
            "  {:<16} {:.3} -> {:.3} {:.3} -> {:.3}",
            label, point.sens, sens_hat, point.fpr, fpr_hat
        );
    }
    Ok(())
}
