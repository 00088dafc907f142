//! Per-study 2x2 tables and their reduction to observed rate pairs.
//!
//! Each study contributes a table of (true positive, false negative,
//! false positive, true negative) counts. The table is reduced to an
//! observed (sensitivity, false-positive-rate) pair together with
//! binomial sampling variances; a continuity correction keeps zero cells
//! off the unit-interval boundary where the transforms are undefined.
//!
//! Input files are delimited text (comma or tab, auto-detected) with a
//! header naming the five columns `label, tp, fn, fp, tn` in any order and
//! any case. Lines starting with `#` are comments; blank lines are skipped;
//! both LF and CRLF line endings are accepted.

use crate::error::{Error, Result};
use crate::mat2::Vec2;
use crate::transforms::TransformPair;
use serde::Serialize;

/// Fewest studies a dataset may contain; below this the bivariate
/// between-study covariance is not identifiable even in principle.
pub const MIN_STUDIES: usize = 3;

/// How zero cells are handled before rates are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionPolicy {
    /// Add 0.5 to all four cells, but only when at least one cell is zero.
    Half,
    /// Use the raw counts; zero cells then yield boundary rates that the
    /// transforms will reject.
    None,
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        CorrectionPolicy::Half
    }
}

impl std::str::FromStr for CorrectionPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "half" => Ok(CorrectionPolicy::Half),
            "none" => Ok(CorrectionPolicy::None),
            other => Err(Error::Config(format!(
                "unknown correction policy {other:?} (expected half or none)"
            ))),
        }
    }
}

/// One study's diagnostic 2x2 table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudyTable {
    pub label: String,
    pub true_pos: u64,
    pub false_neg: u64,
    pub false_pos: u64,
    pub true_neg: u64,
}

impl StudyTable {
    pub fn new(
        label: impl Into<String>,
        true_pos: u64,
        false_neg: u64,
        false_pos: u64,
        true_neg: u64,
    ) -> Self {
        StudyTable {
            label: label.into(),
            true_pos,
            false_neg,
            false_pos,
            true_neg,
        }
    }

    /// Number of diseased subjects (raw, uncorrected).
    pub fn n_diseased(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    /// Number of non-diseased subjects (raw, uncorrected).
    pub fn n_nondiseased(&self) -> u64 {
        self.false_pos + self.true_neg
    }

    /// Reduces the table to observed rates and binomial variances.
    ///
    /// Under [`CorrectionPolicy::Half`] the correction fires only when some
    /// cell is zero, and then applies to all four cells at once, so the two
    /// margins stay internally consistent. The stored variances use the
    /// corrected (effective) denominators.
    pub fn observe(&self, policy: CorrectionPolicy) -> ObservedPoint {
        let any_zero = self.true_pos == 0
            || self.false_neg == 0
            || self.false_pos == 0
            || self.true_neg == 0;
        let add = match policy {
            CorrectionPolicy::Half if any_zero => 0.5,
            _ => 0.0,
        };
        let tp = self.true_pos as f64 + add;
        let fal_neg = self.false_neg as f64 + add;
        let fp = self.false_pos as f64 + add;
        let tn = self.true_neg as f64 + add;
        let n1 = tp + fal_neg;
        let n0 = fp + tn;
        let sens = tp / n1;
        let fpr = fp / n0;
        ObservedPoint {
            sens,
            fpr,
            var_sens: sens * (1.0 - sens) / n1,
            var_fpr: fpr * (1.0 - fpr) / n0,
            n_diseased: self.n_diseased(),
            n_nondiseased: self.n_nondiseased(),
        }
    }
}

/// A study reduced to its observed rate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedPoint {
    /// Observed sensitivity (possibly continuity-corrected).
    pub sens: f64,
    /// Observed false-positive rate (possibly continuity-corrected).
    pub fpr: f64,
    /// Binomial variance of `sens` on the rate scale, with the effective
    /// (corrected) denominator.
    pub var_sens: f64,
    /// Binomial variance of `fpr` on the rate scale.
    pub var_fpr: f64,
    /// Raw diseased count of the underlying table.
    pub n_diseased: u64,
    /// Raw non-diseased count of the underlying table.
    pub n_nondiseased: u64,
}

impl ObservedPoint {
    /// The observed pair as a vector: `x = sens`, `y = fpr`.
    pub fn rates(&self) -> Vec2 {
        Vec2::new(self.sens, self.fpr)
    }

    /// The observed pair on the transformed scale.
    pub fn transformed(&self, pair: &TransformPair) -> Result<Vec2> {
        Ok(Vec2::new(
            pair.p.apply(self.sens)?,
            pair.q.apply(self.fpr)?,
        ))
    }

    /// Delta-method within-study variances on the transformed scale:
    /// the rate-scale binomial variance scaled by the squared transform
    /// derivative at the observed rate, per coordinate.
    pub fn within_study_var(&self, pair: &TransformPair) -> Result<Vec2> {
        let dp = pair.p.deriv(self.sens)?;
        let dq = pair.q.deriv(self.fpr)?;
        Ok(Vec2::new(
            dp * dp * self.var_sens,
            dq * dq * self.var_fpr,
        ))
    }
}

/// An ordered collection of studies ready for model fitting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    points: Vec<ObservedPoint>,
    labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from raw tables, applying the correction policy.
    pub fn from_tables(tables: &[StudyTable], policy: CorrectionPolicy) -> Result<Dataset> {
        let points: Vec<ObservedPoint> = tables.iter().map(|t| t.observe(policy)).collect();
        let labels = tables.iter().map(|t| t.label.clone()).collect();
        Self::validated(points, labels)
    }

    /// Builds a dataset from already-reduced points; labels are positional.
    pub fn from_points(points: Vec<ObservedPoint>) -> Result<Dataset> {
        let labels = (1..=points.len()).map(|i| i.to_string()).collect();
        Self::validated(points, labels)
    }

    fn validated(points: Vec<ObservedPoint>, labels: Vec<String>) -> Result<Dataset> {
        if points.len() < MIN_STUDIES {
            return Err(Error::Input(format!(
                "dataset needs at least {MIN_STUDIES} studies, got {}",
                points.len()
            )));
        }
        Ok(Dataset { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[ObservedPoint] {
        &self.points
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// All studies on the transformed scale.
    pub fn transformed(&self, pair: &TransformPair) -> Result<Vec<Vec2>> {
        self.points.iter().map(|p| p.transformed(pair)).collect()
    }

    /// Delta-method within-study variances for all studies.
    pub fn within_study_vars(&self, pair: &TransformPair) -> Result<Vec<Vec2>> {
        self.points
            .iter()
            .map(|p| p.within_study_var(pair))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// input parsing
// ---------------------------------------------------------------------------

const COLUMNS: [&str; 5] = ["label", "tp", "fn", "fp", "tn"];

/// Parses delimited study tables from text. See the module docs for the
/// format. Errors name the offending data row (1-based, counting
/// non-comment, non-blank rows after the header) and column.
pub fn parse_tables(text: &str) -> Result<Vec<StudyTable>> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty input: no header row".into()))?;
    let delim = if header.contains('\t') { '\t' } else { ',' };

    // map each required column to its position in the header
    let names: Vec<String> = header
        .split(delim)
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    for name in &names {
        if !COLUMNS.contains(&name.as_str()) {
            return Err(Error::Input(format!(
                "unknown header column {name:?} (expected label, tp, fn, fp, tn)"
            )));
        }
    }
    let mut positions = [usize::MAX; 5];
    for (want_idx, want) in COLUMNS.iter().enumerate() {
        match names.iter().position(|n| n == want) {
            Some(pos) => positions[want_idx] = pos,
            None => {
                return Err(Error::Input(format!("missing header column {want:?}")));
            }
        }
    }

    let mut tables = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1;
        let cells: Vec<&str> = line.split(delim).map(|c| c.trim()).collect();
        if cells.len() != names.len() {
            return Err(Error::Input(format!(
                "row {row}: expected {} fields, found {}",
                names.len(),
                cells.len()
            )));
        }
        let count = |col: usize| -> Result<u64> {
            let cell = cells[positions[col]];
            cell.parse::<u64>().map_err(|_| {
                Error::Input(format!(
                    "row {row}, column {}: invalid count {cell:?} (expected a non-negative integer)",
                    COLUMNS[col]
                ))
            })
        };
        tables.push(StudyTable {
            label: cells[positions[0]].to_string(),
            true_pos: count(1)?,
            false_neg: count(2)?,
            false_pos: count(3)?,
            true_neg: count(4)?,
        });
    }
    Ok(tables)
}

/// Reads and parses study tables from a file.
pub fn read_dataset(path: &std::path::Path) -> Result<Vec<StudyTable>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_tables(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::Alpha;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn pair(p: f64, q: f64) -> TransformPair {
        TransformPair::new(Alpha::new(p).unwrap(), Alpha::new(q).unwrap())
    }

    #[test]
    fn observe_without_zeros_uses_raw_counts() {
        let pt = StudyTable::new("s", 90, 10, 20, 80).observe(CorrectionPolicy::Half);
        assert_relative_eq!(pt.sens, 0.9, epsilon = 1e-15);
        assert_relative_eq!(pt.fpr, 0.2, epsilon = 1e-15);
        assert_relative_eq!(pt.var_sens, 0.0009, epsilon = 1e-15);
        assert_relative_eq!(pt.var_fpr, 0.2 * 0.8 / 100.0, epsilon = 1e-15);
        assert_eq!(pt.n_diseased, 100);
        assert_eq!(pt.n_nondiseased, 100);
    }

    #[test]
    fn observe_corrects_all_cells_when_any_is_zero() {
        let pt = StudyTable::new("s", 40, 0, 5, 155).observe(CorrectionPolicy::Half);
        assert_relative_eq!(pt.sens, 40.5 / 41.0, epsilon = 1e-12);
        assert_relative_eq!(pt.fpr, 5.5 / 161.0, epsilon = 1e-12);
        assert_relative_eq!(pt.var_sens, pt.sens * (1.0 - pt.sens) / 41.0, epsilon = 1e-15);
        assert_relative_eq!(pt.var_fpr, pt.fpr * (1.0 - pt.fpr) / 161.0, epsilon = 1e-15);
    }

    #[test]
    fn observe_smallest_table() {
        let pt = StudyTable::new("s", 1, 1, 1, 1).observe(CorrectionPolicy::Half);
        assert_relative_eq!(pt.sens, 0.5, epsilon = 1e-15);
        assert_relative_eq!(pt.var_sens, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn observe_policy_none_keeps_boundary_rates() {
        let pt = StudyTable::new("s", 40, 0, 5, 155).observe(CorrectionPolicy::None);
        assert_eq!(pt.sens, 1.0);
        // the boundary rate is then rejected at transform time
        assert!(pt.transformed(&pair(1.0, 1.0)).is_err());
    }

    #[test]
    fn transformed_matches_componentwise_transform() {
        let pt = StudyTable::new("s", 90, 10, 20, 80).observe(CorrectionPolicy::Half);
        let pr = pair(1.4, 0.6);
        let z = pt.transformed(&pr).unwrap();
        assert_relative_eq!(z.x, pr.p.apply(0.9).unwrap(), epsilon = 1e-15);
        assert_relative_eq!(z.y, pr.q.apply(0.2).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn within_study_var_reference_value() {
        // sens = 0.9 over n = 40, alpha_p = 2: (2 / 0.9)^2 * 0.9 * 0.1 / 40
        let pt = StudyTable::new("s", 36, 4, 5, 35).observe(CorrectionPolicy::Half);
        let d = pt.within_study_var(&pair(2.0, 1.0)).unwrap();
        assert_relative_eq!(d.x, (2.0 / 0.9_f64).powi(2) * 0.00225, epsilon = 1e-12);
        assert_relative_eq!(d.x, 0.0111111111, epsilon = 1e-9);
    }

    /// Delta-method variance vs. the empirical variance of transformed
    /// binomial draws. The delta approximation is only first-order, so we
    /// ask for 10% relative agreement at n = 40.
    #[test]
    fn within_study_var_matches_binomial_simulation() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 40u64;
        let p = 0.9;
        let binom = rand_distr::Binomial::new(n, p).unwrap();
        let pr = pair(2.0, 1.0);
        let mut zs = Vec::with_capacity(200_000);
        for _ in 0..200_000 {
            let x = binom.sample(&mut rng);
            let table = StudyTable::new("s", x, n - x, 5, 5);
            let pt = table.observe(CorrectionPolicy::Half);
            zs.push(pt.transformed(&pr).unwrap().x);
        }
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64;
        let delta = (2.0 / p).powi(2) * p * (1.0 - p) / n as f64;
        assert!(
            (var - delta).abs() / delta < 0.10,
            "empirical {var} vs delta {delta}"
        );
    }

    #[test]
    fn dataset_requires_three_studies() {
        let tables = vec![
            StudyTable::new("a", 9, 1, 2, 8),
            StudyTable::new("b", 8, 2, 1, 9),
        ];
        assert!(Dataset::from_tables(&tables, CorrectionPolicy::Half).is_err());
    }

    #[test]
    fn parse_happy_path() {
        let text = "label,tp,fn,fp,tn\ns1,90,10,20,80\n";
        let tables = parse_tables(text).unwrap();
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0], StudyTable::new("s1", 90, 10, 20, 80));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let text = "label,tp,fn,fp,tn\ns1,90,10,20,80\ns2,90,-1,20,80\n";
        let err = parse_tables(text).unwrap_err().to_string();
        assert!(err.contains("row 2"), "message was: {err}");
        assert!(err.contains("fn"), "message was: {err}");
    }

    #[test]
    fn parse_accepts_reordered_case_insensitive_header() {
        let text = "TN,FP,FN,TP,Label\n80,20,10,90,s1\n";
        let tables = parse_tables(text).unwrap();
        assert_eq!(tables[0], StudyTable::new("s1", 90, 10, 20, 80));
    }

    #[test]
    fn parse_accepts_tabs_comments_blank_lines_and_crlf() {
        let text = "# study collection\r\nlabel\ttp\tfn\tfp\ttn\r\n\r\ns1\t90\t10\t20\t80\r\n# trailing note\r\ns2\t30\t10\t5\t55\r\n";
        let tables = parse_tables(text).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[1], StudyTable::new("s2", 30, 10, 5, 55));
    }

    #[test]
    fn parse_thirteen_rows() {
        let mut text = String::from("label,tp,fn,fp,tn\n");
        for i in 0..13 {
            text.push_str(&format!("s{i},{},{},{},{}\n", 30 + i, 10, 5, 60 + i));
        }
        assert_eq!(parse_tables(&text).unwrap().len(), 13);
    }

    #[test]
    fn parse_rejects_unknown_and_missing_columns() {
        assert!(parse_tables("label,tp,fn,fp,tn,extra\n").is_err());
        assert!(parse_tables("label,tp,fn,fp\nx,1,2,3\n").is_err());
    }

    #[test]
    fn parse_reports_wrong_field_count() {
        let text = "label,tp,fn,fp,tn\ns1,90,10,20\n";
        let err = parse_tables(text).unwrap_err().to_string();
        assert!(err.contains("row 1"), "message was: {err}");
    }
}
