//! Build the summary ROC curve for a selected model: curve samples, area
//! under the curve, the summary operating point, and 95% confidence and
//! prediction regions around it.
//!
//! The curve is the locus traced by the estimated between-study mean as
//! the false-positive coordinate sweeps its transformed axis; the
//! confidence region quantifies uncertainty in the mean while the wider
//! prediction region describes where a *new* study's operating point is
//! expected to fall.
//!
//! Run with: cargo run --example summary_roc

use sroc_select::criteria::{select, CriterionKind};
use sroc_select::model_fit::{default_grid, fit_model, Method};
use sroc_select::sroc::{region, summary_curve, summary_point, RegionKind};
use sroc_select::study_data::{read_dataset, CorrectionPolicy, Dataset};
use std::path::Path;

fn main() -> sroc_select::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_studies.csv");
    let tables = read_dataset(&path)?;
    let data = Dataset::from_tables(&tables, CorrectionPolicy::Half)?;

    // pick the model by the empirical-likelihood BLUP criterion, then refit
    let grid = default_grid();
    let ranking = select(&data, &grid, CriterionKind::ElBlup, Method::Reml)?;
    let spec = ranking[0].spec;
    let fit = fit_model(&data, spec, Method::Reml)?;
    println!("selected model: {spec}");

    let (fpr, sens) = summary_point(&fit)?;
    let curve = summary_curve(&fit, 1001)?;
    println!("summary point  (fpr, sens) = ({fpr:.4}, {sens:.4})");
    println!("area under the summary curve = {:.4}", curve.auc);

    println!("\ncurve samples (every 100th grid point):");
    println!("  {:>8} {:>8}", "fpr", "sens");
    for (u, s) in curve
        .fpr_grid
        .iter()
        .zip(&curve.sens_values)
        .step_by(100)
    {
        println!("  {u:>8.4} {s:>8.4}");
    }

    for kind in [RegionKind::Confidence, RegionKind::Prediction] {
        let reg = region(&fit, &data, kind, 0.95, 360)?;
        // a quick bounding box gives a feel for the region without a plot
        let (mut lo_f, mut hi_f) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_s, mut hi_s) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(f, s) in &reg.boundary {
            lo_f = lo_f.min(f);
            hi_f = hi_f.max(f);
            lo_s = lo_s.min(s);
            hi_s = hi_s.max(s);
        }
        println!(
            "\n95% {kind} region: {} boundary points,\n  fpr in [{lo_f:.4}, {hi_f:.4}], sens in [{lo_s:.4}, {hi_s:.4}]",
            reg.boundary.len()
        );
    }

    println!("\nfor plot-ready files, use the CLI:");
    println!("  sroc-select sroc --input data/sample_studies.csv --criterion el-blup --output curve.csv");
    Ok(())
}
