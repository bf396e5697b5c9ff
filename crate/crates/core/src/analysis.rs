//! Per-window processing shared by the pipeline and the noise harness:
//! filtered signals to beats, beats to feature rows.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::features::{self, BpTarget, CategoryThresholds, FeatureRow, FeatureVector, PulseAnalysis, ScsaBeat};
use crate::fiducials::{self, Beat, FiducialError};
use crate::preprocess::{self, FilterConfig, PreprocessError};
use crate::scsa::ChiGridConfig;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("preprocessing: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("fiducials: {0}")]
    Fiducial(#[from] FiducialError),
    #[error("features: {0}")]
    Feature(#[from] features::FeatureError),
}

/// Settings for turning a window into feature rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub filter: FilterConfig,
    pub scsa: ChiGridConfig,
    pub categories: CategoryThresholds,
}

/// Beats of one window after detection and smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBeats {
    pub subject_id: String,
    pub fs: f64,
    pub rr_median: f64,
    pub beats: Vec<Beat>,
    /// Valley pairs rejected by the segmenter.
    pub segmentation_dropped: usize,
    /// Detection failures by reason.
    pub detection_failures: BTreeMap<String, usize>,
    pub smoothing_outliers: usize,
    pub smoothing_dropped: usize,
    /// Consistent beats as detected, before cross-beat smoothing.
    #[serde(skip)]
    pub detected: Vec<Beat>,
}

fn reason(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(['(', ' ', '{']).next().unwrap_or("").to_string()
}

/// Segments the cleaned PPG, marks landmarks and smooths them across beats.
/// `raw` is the unfiltered PPG of the same window; pulses keep their span of
/// it for intensity ratios.
pub fn detect_beats(
    subject_id: &str,
    clean: &[f64],
    raw: &[f64],
    fs: f64,
) -> Result<WindowBeats, AnalysisError> {
    let seg = fiducials::segment_pulses(clean, fs)?;
    let rr = seg.rr_median(fs).ok_or(FiducialError::NoBeats)?;
    let mut failures = BTreeMap::new();
    let mut beats = Vec::new();
    for mut p in seg.pulses {
        p.raw = Some(raw[p.start..p.start + p.len()].to_vec());
        match fiducials::detect_fiducials(&p, rr) {
            Ok(f) if f.is_consistent() => beats.push(Beat { pulse: p, fiducials: f }),
            Ok(_) => *failures.entry("Inconsistent".to_string()).or_insert(0) += 1,
            Err(e) => *failures.entry(reason(&e)).or_insert(0) += 1,
        }
    }
    let smoothed = fiducials::smooth_fiducials(&beats)?;
    Ok(WindowBeats {
        subject_id: subject_id.to_string(),
        fs,
        rr_median: rr,
        beats: smoothed.beats,
        segmentation_dropped: seg.dropped,
        detection_failures: failures,
        smoothing_outliers: smoothed.outliers.len(),
        smoothing_dropped: smoothed.dropped.len(),
        detected: beats,
    })
}

/// SCSA and feature results for one window.
#[derive(Debug, Clone)]
pub struct WindowFeatures {
    pub analyses: Vec<(usize, PulseAnalysis)>,
    pub rows: Vec<FeatureRow>,
    pub failures: BTreeMap<String, usize>,
}

fn count(failures: &mut BTreeMap<String, usize>, e: &impl std::fmt::Debug) {
    *failures.entry(reason(e)).or_insert(0) += 1;
}

/// Runs the SCSA search and feature extraction on every beat and attaches
/// the per-pulse BP target from the smoothed arterial signal.
pub fn extract_features(
    wb: &WindowBeats,
    abp_smooth: &[f64],
    cfg: &AnalysisConfig,
) -> Result<WindowFeatures, AnalysisError> {
    let abp_beats = features::abp_beats(abp_smooth)?;
    let rr_samples = wb.rr_median * wb.fs;
    let mut out = WindowFeatures {
        analyses: Vec::new(),
        rows: Vec::new(),
        failures: BTreeMap::new(),
    };
    for (k, beat) in wb.beats.iter().enumerate() {
        let res = features::analyze_beat(beat, &cfg.scsa).and_then(|a| {
            let t = features::pulse_bp_target(
                abp_smooth,
                &abp_beats,
                &beat.pulse,
                rr_samples,
                &cfg.categories,
            )?;
            Ok((a, t))
        });
        match res {
            Ok((a, target)) => {
                out.rows.push(row(wb, beat, a.features, target));
                out.analyses.push((k, a));
            }
            Err(e) => count(&mut out.failures, &e),
        }
    }
    Ok(out)
}

/// SCSA half of the feature extraction for every beat of a window.
pub fn scsa_window(wb: &WindowBeats, cfg: &AnalysisConfig) -> (Vec<ScsaBeat>, BTreeMap<String, usize>) {
    let mut out = Vec::with_capacity(wb.beats.len());
    let mut failures = BTreeMap::new();
    for beat in &wb.beats {
        match features::scsa_beat(beat, &cfg.scsa) {
            Ok((s, _, _)) => out.push(s),
            Err(e) => count(&mut failures, &e),
        }
    }
    (out, failures)
}

/// Feature rows from stored SCSA results; beats without one are skipped.
/// Gives the same rows as [`extract_features`].
pub fn rows_from_scsa(
    wb: &WindowBeats,
    scsa: &[ScsaBeat],
    abp_smooth: &[f64],
    cfg: &AnalysisConfig,
) -> Result<(Vec<FeatureRow>, BTreeMap<String, usize>), AnalysisError> {
    let abp_beats = features::abp_beats(abp_smooth)?;
    let rr_samples = wb.rr_median * wb.fs;
    let by_start: BTreeMap<usize, &ScsaBeat> = scsa.iter().map(|s| (s.pulse_start, s)).collect();
    let mut rows = Vec::new();
    let mut failures = BTreeMap::new();
    for beat in &wb.beats {
        let Some(s) = by_start.get(&beat.pulse.start) else { continue };
        let res = features::beat_features(beat, s).and_then(|f| {
            let t = features::pulse_bp_target(
                abp_smooth,
                &abp_beats,
                &beat.pulse,
                rr_samples,
                &cfg.categories,
            )?;
            Ok((f, t))
        });
        match res {
            Ok((f, t)) => rows.push(row(wb, beat, f, t)),
            Err(e) => count(&mut failures, &e),
        }
    }
    Ok((rows, failures))
}

fn row(wb: &WindowBeats, beat: &Beat, features: FeatureVector, target: BpTarget) -> FeatureRow {
    FeatureRow {
        subject_id: wb.subject_id.clone(),
        pulse_start: beat.pulse.start,
        features,
        target,
    }
}

/// Filtering, beat detection and features for one raw window.
pub fn analyze_window(
    subject_id: &str,
    ppg: &[f64],
    abp: &[f64],
    fs: f64,
    cfg: &AnalysisConfig,
) -> Result<(WindowBeats, WindowFeatures), AnalysisError> {
    let pre = preprocess::preprocess(ppg, abp, fs, &cfg.filter)?;
    let wb = detect_beats(subject_id, &pre.ppg_clean, ppg, fs)?;
    let wf = extract_features(&wb, &pre.abp_smooth, cfg)?;
    Ok((wb, wf))
}
