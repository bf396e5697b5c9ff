//! Gradient-boosted trees, nested cross-validation, error metrics and
//! AAMI/BHS grading.

pub mod cv;
pub mod gbt;
pub mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, BpCategory, FeatureError, FeatureRow, Standardizer, Target};
pub use cv::{fold_assignment, nested_cv, CvConfig, CvOutcome, ParamSpace};
pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use metrics::{
    bhs_grade, compute_metrics, grade_standards, stratified_eval, BhsGrade, CategoryRow,
    MetricsReport, StandardsVerdict,
};

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} rows, have {have}")]
    TooFewRows { need: usize, have: usize },
    #[error("rows have different widths")]
    Ragged,
    #[error("non-finite value in the data")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// A model ready to apply to raw feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub target: Target,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub gbt: GbtModel,
}

impl TrainedModel {
    pub fn predict_row(&self, raw: &[f64]) -> f64 {
        self.gbt.predict_row(&self.standardizer.transform_row(raw))
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub target: Target,
    pub model: String,
    pub seed: u64,
    pub n_rows: usize,
    pub n_subjects: usize,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub search_budget: usize,
    pub metrics: MetricsReport,
    pub per_category: Vec<CategoryRow>,
    pub standards: StandardsVerdict,
    pub fold_choices: Vec<cv::FoldChoice>,
}

/// One out-of-fold prediction, as written to `predictions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target: Target,
    pub subject_id: String,
    pub pulse_start: usize,
    pub fold: usize,
    pub category: BpCategory,
    pub y_true: f64,
    pub y_pred: f64,
}

pub struct TrainOutput {
    pub model: TrainedModel,
    pub outcome: CvOutcome,
    pub predictions: Vec<Prediction>,
    pub metrics_file: MetricsFile,
}

/// Metrics, per-category rows and provenance for one target's predictions.
pub fn evaluate(
    target: Target,
    cfg: &CvConfig,
    predictions: &[Prediction],
    fold_choices: Vec<cv::FoldChoice>,
) -> Result<MetricsFile, RegressionError> {
    let preds: Vec<&Prediction> = predictions.iter().filter(|p| p.target == target).collect();
    let y: Vec<f64> = preds.iter().map(|p| p.y_true).collect();
    let yhat: Vec<f64> = preds.iter().map(|p| p.y_pred).collect();
    let categories: Vec<BpCategory> = preds.iter().map(|p| p.category).collect();
    let n_subjects = preds
        .iter()
        .map(|p| p.subject_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let metrics = compute_metrics(&y, &yhat)?;
    let standards = grade_standards(&metrics, n_subjects);
    Ok(MetricsFile {
        target,
        model: "gbt".into(),
        seed: cfg.seed,
        n_rows: preds.len(),
        n_subjects,
        outer_folds: cfg.outer_folds,
        inner_folds: cfg.inner_folds,
        search_budget: cfg.search_budget,
        metrics,
        per_category: stratified_eval(&y, &yhat, &categories)?,
        standards,
        fold_choices,
    })
}

/// Nested CV estimate plus a final model on all rows whose parameters come
/// from the same random search run over an inner-fold split of every row.
pub fn train(rows: &[FeatureRow], target: Target, cfg: &CvConfig) -> Result<TrainOutput, RegressionError> {
    let (x, targets) = features::assemble_matrix(rows)?;
    let y: Vec<f64> = targets.iter().map(|t| t.get(target)).collect();
    let outcome = nested_cv(&x, &y, cfg)?;
    let candidates = cfg.param_space.sample(cfg.search_budget, cfg.seed);
    let (params, _) = cv::search(
        &x,
        &y,
        cfg.inner_folds,
        cv::inner_seed(cfg.seed, cfg.outer_folds),
        &candidates,
        cfg.seed,
    )?;
    let standardizer = Standardizer::fit(&x, &features::FEATURE_NAMES)?;
    let gbt = fit_gbt(&standardizer.transform(&x), &y, &params, cfg.seed)?;
    let predictions: Vec<Prediction> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Prediction {
            target,
            subject_id: r.subject_id.clone(),
            pulse_start: r.pulse_start,
            fold: outcome.folds[i],
            category: r.target.category,
            y_true: y[i],
            y_pred: outcome.predictions[i],
        })
        .collect();
    let metrics_file = evaluate(target, cfg, &predictions, outcome.choices.clone())?;
    Ok(TrainOutput {
        model: TrainedModel {
            target,
            feature_names: features::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            standardizer,
            gbt,
        },
        outcome,
        predictions,
        metrics_file,
    })
}
