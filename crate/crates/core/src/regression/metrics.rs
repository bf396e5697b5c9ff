//! Error metrics, Bland-Altman limits and AAMI/BHS grading.

use serde::{Deserialize, Serialize};

use super::RegressionError;
use crate::features::BpCategory;
use crate::stats;

/// Absolute-error thresholds (mmHg) for the cumulative percentages.
pub const CUM_THRESHOLDS: [f64; 3] = [5.0, 10.0, 15.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Fractions (0..1) of absolute errors within 5, 10 and 15 mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeErrors {
    pub le5: f64,
    pub le10: f64,
    pub le15: f64,
}

impl CumulativeErrors {
    pub fn as_array(&self) -> [f64; 3] {
        [self.le5, self.le10, self.le15]
    }
}

/// Errors are `pred - true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae: f64,
    pub sdae: f64,
    pub me: f64,
    pub sd: f64,
    /// Pearson r; 0 when undefined (see `r_defined`).
    pub r: f64,
    pub r_defined: bool,
    pub max_abs_error: f64,
    pub bland_altman: BlandAltman,
    pub cum_pct: CumulativeErrors,
}

pub fn compute_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport, RegressionError> {
    if y_true.len() != y_pred.len() {
        return Err(RegressionError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let n = y_true.len();
    if n < 2 {
        return Err(RegressionError::TooFewRows { need: 2, have: n });
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let err: Vec<f64> = y_pred.iter().zip(y_true).map(|(p, t)| p - t).collect();
    let abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
    let me = stats::mean(&err);
    let sd = stats::sample_sd(&err);
    let frac = |th: f64| abs.iter().filter(|&&a| a <= th).count() as f64 / n as f64;
    let r = stats::pearson(y_true, y_pred);
    Ok(MetricsReport {
        n,
        mae: stats::mean(&abs),
        sdae: stats::sample_sd(&abs),
        me,
        sd,
        r: r.unwrap_or(0.0),
        r_defined: r.is_some(),
        max_abs_error: abs.iter().copied().fold(0.0, f64::max),
        bland_altman: BlandAltman {
            mean: me,
            lo: me - 1.96 * sd,
            hi: me + 1.96 * sd,
        },
        cum_pct: CumulativeErrors {
            le5: frac(CUM_THRESHOLDS[0]),
            le10: frac(CUM_THRESHOLDS[1]),
            le15: frac(CUM_THRESHOLDS[2]),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BhsGrade {
    A,
    B,
    C,
    #[serde(rename = "fail")]
    Fail,
}

/// Minimum cumulative fractions at 5/10/15 mmHg for grades A, B and C.
pub const BHS_BANDS: [(BhsGrade, [f64; 3]); 3] = [
    (BhsGrade::A, [0.60, 0.85, 0.95]),
    (BhsGrade::B, [0.50, 0.75, 0.90]),
    (BhsGrade::C, [0.40, 0.65, 0.85]),
];

/// Slack for percentages that were rounded before being typed in.
const GRADE_EPS: f64 = 1e-12;

pub fn bhs_grade(cum: &CumulativeErrors) -> BhsGrade {
    let c = cum.as_array();
    for (grade, band) in BHS_BANDS {
        if c.iter().zip(band).all(|(v, b)| *v + GRADE_EPS >= b) {
            return grade;
        }
    }
    BhsGrade::Fail
}

pub const AAMI_MAX_ME: f64 = 5.0;
pub const AAMI_MAX_SD: f64 = 8.0;
pub const AAMI_MIN_SUBJECTS: usize = 85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardsVerdict {
    pub aami_pass: bool,
    /// One entry per failed AAMI condition.
    pub aami_reasons: Vec<String>,
    pub bhs_grade: BhsGrade,
    pub n_subjects: usize,
    /// How `n_subjects` was counted.
    pub subject_count_rule: String,
}

pub fn grade_standards(rep: &MetricsReport, n_subjects: usize) -> StandardsVerdict {
    let mut reasons = Vec::new();
    if rep.me.abs() > AAMI_MAX_ME {
        reasons.push(format!("|ME| {:.2} > {AAMI_MAX_ME}", rep.me.abs()));
    }
    if rep.sd > AAMI_MAX_SD {
        reasons.push(format!("SD {:.2} > {AAMI_MAX_SD}", rep.sd));
    }
    if n_subjects < AAMI_MIN_SUBJECTS {
        reasons.push(format!("N {n_subjects} < {AAMI_MIN_SUBJECTS}"));
    }
    StandardsVerdict {
        aami_pass: reasons.is_empty(),
        aami_reasons: reasons,
        bhs_grade: bhs_grade(&rep.cum_pct),
        n_subjects,
        subject_count_rule: "distinct subject_id".into(),
    }
}

/// Metrics of one BP category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: BpCategory,
    pub n: usize,
    /// Share of all rows.
    pub weight: f64,
    pub metrics: MetricsReport,
}

/// Metrics computed separately per category of the true BP. Categories with
/// fewer than two rows are skipped with a warning.
pub fn stratified_eval(
    y_true: &[f64],
    y_pred: &[f64],
    categories: &[BpCategory],
) -> Result<Vec<CategoryRow>, RegressionError> {
    if y_true.len() != y_pred.len() || y_true.len() != categories.len() {
        return Err(RegressionError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len().min(categories.len()),
        });
    }
    let total = y_true.len() as f64;
    let mut out = Vec::new();
    for cat in BpCategory::ALL {
        let idx: Vec<usize> = (0..categories.len()).filter(|&i| categories[i] == cat).collect();
        if idx.len() < 2 {
            log::warn!("category {} has {} rows; skipped", cat.as_str(), idx.len());
            continue;
        }
        let t: Vec<f64> = idx.iter().map(|&i| y_true[i]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| y_pred[i]).collect();
        out.push(CategoryRow {
            category: cat,
            n: idx.len(),
            weight: idx.len() as f64 / total,
            metrics: compute_metrics(&t, &p)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(cum: [f64; 3], me: f64, sd: f64) -> MetricsReport {
        MetricsReport {
            n: 100,
            mae: 0.0,
            sdae: 0.0,
            me,
            sd,
            r: 0.0,
            r_defined: false,
            max_abs_error: 0.0,
            bland_altman: BlandAltman { mean: me, lo: me - 1.96 * sd, hi: me + 1.96 * sd },
            cum_pct: CumulativeErrors { le5: cum[0], le10: cum[1], le15: cum[2] },
        }
    }

    #[test]
    fn symmetric_unit_errors() {
        let m = compute_metrics(&[10.0, 10.0], &[11.0, 9.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.me, 0.0);
        assert_eq!(m.sdae, 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let t = [100.0, 120.0, 140.0];
        let m = compute_metrics(&t, &t).unwrap();
        assert_eq!(m.mae, 0.0);
        assert!(m.r_defined);
        assert!((m.r - 1.0).abs() < 1e-12);
        let flat = compute_metrics(&[5.0, 5.0], &[5.0, 5.0]).unwrap();
        assert!(!flat.r_defined);
        assert_eq!(flat.r, 0.0);
    }

    #[test]
    fn hand_computed_fixture() {
        let t = [100.0, 100.0, 100.0, 100.0];
        let p = [102.0, 104.0, 106.0, 108.0];
        let m = compute_metrics(&t, &p).unwrap();
        assert_eq!(m.mae, 5.0);
        assert_eq!(m.cum_pct.le5, 0.5);
        assert_eq!(m.cum_pct.le10, 1.0);
        let sd = (20.0f64 / 3.0).sqrt();
        assert!((m.sd - sd).abs() < 1e-12);
        assert!((m.bland_altman.hi - (5.0 + 1.96 * sd)).abs() < 1e-12);
        assert_eq!(m.max_abs_error, 8.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_metrics(&[1.0, 2.0], &[1.0]),
            Err(RegressionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn below_all_bands_fails() {
        assert_eq!(
            bhs_grade(&CumulativeErrors { le5: 0.39, le10: 0.64, le15: 0.84 }),
            BhsGrade::Fail
        );
        assert_eq!(
            bhs_grade(&CumulativeErrors { le5: 0.40, le10: 0.65, le15: 0.85 }),
            BhsGrade::C
        );
    }

    #[test]
    fn aami_reasons() {
        let v = grade_standards(&report([0.7, 0.9, 0.99], 6.0, 9.0), 10);
        assert!(!v.aami_pass);
        assert_eq!(v.aami_reasons.len(), 3);
        let ok = grade_standards(&report([0.7, 0.9, 0.99], -5.0, 8.0), 85);
        assert!(ok.aami_pass);
    }

    #[test]
    fn stratified_identity() {
        let cats = [
            BpCategory::Hypotensive,
            BpCategory::Hypotensive,
            BpCategory::Normotensive,
            BpCategory::Normotensive,
            BpCategory::Normotensive,
            BpCategory::Hypertensive,
        ];
        let t = [90.0, 95.0, 120.0, 110.0, 125.0, 150.0];
        let p = [92.0, 91.0, 121.0, 110.0, 130.0, 149.0];
        let rows = stratified_eval(&t, &p, &cats).unwrap();
        // the single hypertensive row cannot form metrics
        assert_eq!(rows.len(), 2);
        let all = stratified_eval(&t, &p, &[BpCategory::Normotensive; 6]).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].weight, 1.0);
    }

    #[test]
    fn published_standards_rows() {
        let cat = grade_standards(&report([0.61, 0.85, 0.96], -0.11, 8.63), 942);
        assert_eq!(cat.bhs_grade, BhsGrade::A);
        assert!(!cat.aami_pass);
        assert_eq!(cat.aami_reasons, vec!["SD 8.63 > 8".to_string()]);
        let lgb = grade_standards(&report([0.52, 0.79, 0.90], -0.09, 9.11), 942);
        assert_eq!(lgb.bhs_grade, BhsGrade::B);
    }
}
