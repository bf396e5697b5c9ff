//! Noise stress testing: SNR-controlled white noise, baseline wander,
//! landmark displacement and the repeated-trial sweep.
//!
//! SNR is measured against the power of the mean-removed signal. A sweep
//! draws `trials_per_level` sub-windows from the dataset; every level reuses
//! the same sub-windows so the levels differ only in the injected noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisConfig, WindowBeats, WindowFeatures};
use crate::features::BpCategory;
use crate::fiducials::{Beat, PulseFiducials};
use crate::regression::cv::splitmix64;
use crate::regression::TrainedModel;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("signal has zero power after removing its mean")]
    ZeroPowerSignal,
    #[error("wander frequency {0} Hz reaches the band-pass")]
    FrequencyInBand(f64),
    #[error("no landmark present in both pulses")]
    NoCommonLandmarks,
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),
    #[error("dataset is empty or shorter than one sub-window")]
    EmptyDataset,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for NoiseError {
    fn from(e: std::io::Error) -> Self {
        NoiseError::Io(e.to_string())
    }
}

/// Wander frequencies from here up are inside the PPG band-pass.
pub const WANDER_MAX_HZ: f64 = 0.5;

fn mean_removed_power(x: &[f64]) -> f64 {
    let m = stats::mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len().max(1) as f64
}

/// Adds white Gaussian noise of variance `power(x) / 10^(snr_db/10)`.
/// `snr_db = +inf` returns the input unchanged.
pub fn add_awgn(x: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>, NoiseError> {
    if snr_db == f64::INFINITY {
        return Ok(x.to_vec());
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(NoiseError::InvalidSpec(format!("snr {snr_db} dB")));
    }
    let p = mean_removed_power(x);
    if p <= 0.0 || !p.is_finite() {
        return Err(NoiseError::ZeroPowerSignal);
    }
    let sd = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| NoiseError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(x.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Adds `amp * max|x| * sin(2 pi f t + phi)`, with the phase drawn from `seed`.
pub fn add_baseline_wander(x: &[f64], fs: f64, amp: f64, f: f64, seed: u64) -> Result<Vec<f64>, NoiseError> {
    if f >= WANDER_MAX_HZ {
        return Err(NoiseError::FrequencyInBand(f));
    }
    if amp == 0.0 {
        return Ok(x.to_vec());
    }
    let phi = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..2.0 * PI);
    let scale = amp * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| v + scale * (2.0 * PI * f * i as f64 / fs + phi).sin())
        .collect())
}

/// Landmarks compared by the harness, in report order.
pub const LANDMARKS: [&str; 9] = [
    "valley_start",
    "sys_peak",
    "dicrotic_notch",
    "valley_end",
    "a",
    "b",
    "c",
    "d",
    "e",
];

fn landmark_index(f: &PulseFiducials, name: &str) -> Option<usize> {
    match name {
        "valley_start" => Some(f.valley_start.index),
        "sys_peak" => Some(f.sys_peak.index),
        "dicrotic_notch" => Some(f.dicrotic_notch.index),
        "valley_end" => Some(f.valley_end.index),
        _ => {
            let c = name.chars().next()?;
            f.sdppg.get(c).map(|l| l.index)
        }
    }
}

/// Seconds between matching landmarks; `None` where either side lacks it.
pub type Displacements = [(&'static str, Option<f64>); 9];

/// `|t_noisy - t_clean|` per landmark, both sets indexed from the same origin.
pub fn fiducial_displacement(
    clean: &PulseFiducials,
    noisy: &PulseFiducials,
    fs: f64,
) -> Result<Displacements, NoiseError> {
    displacement_with_shift(clean, noisy, 0, fs)
}

/// Like [`fiducial_displacement`], with the noisy origin `shift` samples after
/// the clean one.
fn displacement_with_shift(
    clean: &PulseFiducials,
    noisy: &PulseFiducials,
    shift: i64,
    fs: f64,
) -> Result<Displacements, NoiseError> {
    let out = LANDMARKS.map(|name| {
        let d = match (landmark_index(clean, name), landmark_index(noisy, name)) {
            (Some(c), Some(n)) => Some((n as i64 + shift - c as i64).unsigned_abs() as f64 / fs),
            _ => None,
        };
        (name, d)
    });
    if out.iter().all(|(_, d)| d.is_none()) {
        return Err(NoiseError::NoCommonLandmarks);
    }
    Ok(out)
}

/// Displacements of two detected beats, aligned on absolute sample indices.
pub fn beat_displacement(clean: &Beat, noisy: &Beat, fs: f64) -> Result<Displacements, NoiseError> {
    let shift = noisy.pulse.start as i64 - clean.pulse.start as i64;
    displacement_with_shift(&clean.fiducials, &noisy.fiducials, shift, fs)
}

fn abs_peak(b: &Beat) -> usize {
    b.pulse.start + b.fiducials.sys_peak.index
}

/// For every clean beat, the noisy beat whose systolic peak is nearest,
/// provided it lies within `max_dist` samples.
pub fn match_beats(clean: &[Beat], noisy: &[Beat], max_dist: f64) -> Vec<Option<usize>> {
    clean
        .iter()
        .map(|c| {
            let pc = abs_peak(c) as f64;
            noisy
                .iter()
                .enumerate()
                .map(|(j, n)| (j, (abs_peak(n) as f64 - pc).abs()))
                .filter(|&(_, d)| d <= max_dist)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Ascending; `inf` is accepted as the noiseless sentinel.
    pub snr_levels_db: Vec<f64>,
    pub seed: u64,
    pub trials_per_level: usize,
    /// Length of the sub-window analysed in each trial.
    pub window_s: f64,
    pub bootstrap_resamples: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            snr_levels_db: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            seed: 0,
            trials_per_level: 100,
            window_s: 10.0,
            bootstrap_resamples: 1000,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |m: String| Err(NoiseError::InvalidSpec(m));
        if self.snr_levels_db.is_empty() {
            return bad("no SNR levels".into());
        }
        if self.snr_levels_db.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return bad("SNR levels must be numbers".into());
        }
        if self.snr_levels_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("SNR levels must be strictly ascending".into());
        }
        if self.trials_per_level == 0 {
            return bad("trials_per_level is 0".into());
        }
        if !(self.window_s > 0.0) {
            return bad(format!("window_s {}", self.window_s));
        }
        Ok(())
    }
}

/// Parses `lo:hi:step` (inclusive) or a comma list of dB values.
pub fn parse_snr_levels(s: &str) -> Result<Vec<f64>, NoiseError> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| NoiseError::InvalidSpec(format!("bad SNR value '{t}'")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || hi < lo {
            return Err(NoiseError::InvalidSpec(format!("bad SNR range '{s}'")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| lo + step * i as f64).collect());
    }
    s.split(',').map(num).collect()
}

/// A synchronised PPG/ABP segment the sweep draws sub-windows from.
#[derive(Debug, Clone, PartialEq)]
pub struct StressInput {
    pub subject_id: String,
    pub fs: f64,
    pub ppg: Vec<f64>,
    pub abp: Vec<f64>,
}

/// Mean with a percentile-bootstrap 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

/// Bootstrap of the mean of `x` with `resamples` draws.
pub fn bootstrap_mean(x: &[f64], resamples: usize, seed: u64) -> Option<Estimate> {
    if x.is_empty() {
        return None;
    }
    let mean = stats::mean(x);
    if resamples == 0 || x.len() == 1 {
        return Some(Estimate { mean, ci_lo: mean, ci_hi: mean, n: x.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..x.len()).map(|_| x[rng.gen_range(0..x.len())]).sum::<f64>() / x.len() as f64)
        .collect();
    Some(Estimate {
        mean,
        ci_lo: stats::percentile(&means, 2.5),
        ci_hi: stats::percentile(&means, 97.5),
        n: x.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkStats {
    pub landmark: String,
    /// Landmarks after cross-beat smoothing, as used for features.
    pub mean_s: Option<f64>,
    pub p95_s: Option<f64>,
    pub n_matched: usize,
    pub n_missing: usize,
    /// Per-beat detections before smoothing.
    pub detected_mean_s: Option<f64>,
    pub detected_p95_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub snr_db: f64,
    pub trials: usize,
    /// Trials that produced at least one feature row.
    pub successes: usize,
    pub success_rate: f64,
    pub failures: BTreeMap<String, usize>,
    /// Relative SCSA reconstruction RMSE, one value per successful trial.
    pub recon_rmse: Option<Estimate>,
    /// Per-trial MAE of the model against the reference BP.
    pub mae: Option<Estimate>,
    /// MAE over all rows of a category at this level.
    pub mae_by_category: BTreeMap<String, f64>,
    pub landmarks: Vec<LandmarkStats>,
}

/// One matched (or unmatched) clean beat at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRecord {
    pub snr_db: f64,
    /// `smoothed` or `detected`.
    pub stage: &'static str,
    pub trial: usize,
    pub subject_id: String,
    /// Absolute index of the clean systolic peak in the source segment.
    pub clean_peak: usize,
    pub landmark: String,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressHeader {
    pub seed: u64,
    pub trials_per_level: usize,
    pub window_s: f64,
    pub bootstrap_resamples: usize,
    pub target: String,
    pub aggregation: String,
    /// Same sub-windows without added noise.
    pub clean_mae: Option<Estimate>,
    pub clean_successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub header: StressHeader,
    pub levels: Vec<LevelReport>,
    #[serde(skip)]
    pub displacements: Vec<DisplacementRecord>,
}

impl StressReport {
    pub fn level(&self, snr_db: f64) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.snr_db == snr_db)
    }
}

const AGGREGATION: &str = "landmarks: mean and p95 of |displacement| over matched beats, \
smoothed landmarks and raw per-beat detections matched separately; \
recon_rmse and mae: mean over successful trials with 95% percentile-bootstrap interval";

/// The sub-window analysed in trial `t`.
struct TrialWindow {
    input: usize,
    start: usize,
    len: usize,
    seed: u64,
}

fn trial_windows(data: &[StressInput], spec: &NoiseSpec) -> Result<Vec<TrialWindow>, NoiseError> {
    let usable: Vec<usize> = (0..data.len())
        .filter(|&i| data[i].ppg.len() >= (spec.window_s * data[i].fs).round() as usize)
        .collect();
    if usable.is_empty() {
        return Err(NoiseError::EmptyDataset);
    }
    Ok((0..spec.trials_per_level)
        .map(|t| {
            let seed = splitmix64(spec.seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let input = usable[t % usable.len()];
            let d = &data[input];
            let len = (spec.window_s * d.fs).round() as usize;
            let start = ChaCha8Rng::seed_from_u64(seed).gen_range(0..=d.ppg.len() - len);
            TrialWindow { input, start, len, seed }
        })
        .collect())
}

struct TrialResult {
    beats: Option<WindowBeats>,
    features: Option<WindowFeatures>,
    failure: Option<String>,
}

fn run_trial(
    d: &StressInput,
    w: &TrialWindow,
    snr_db: f64,
    cfg: &AnalysisConfig,
) -> TrialResult {
    let ppg = &d.ppg[w.start..w.start + w.len];
    let abp = &d.abp[w.start..w.start + w.len];
    let noisy = match add_awgn(ppg, snr_db, splitmix64(w.seed ^ snr_db.to_bits())) {
        Ok(v) => v,
        Err(e) => return fail(format!("{e:?}")),
    };
    match analysis::analyze_window(&d.subject_id, &noisy, abp, d.fs, cfg) {
        Ok((wb, wf)) if !wf.rows.is_empty() => TrialResult {
            beats: Some(wb),
            features: Some(wf),
            failure: None,
        },
        Ok((wb, wf)) => {
            let why = wf
                .failures
                .keys()
                .next()
                .cloned()
                .unwrap_or_else(|| "NoRows".to_string());
            TrialResult {
                beats: Some(wb),
                features: None,
                failure: Some(why),
            }
        }
        Err(e) => fail(format!("{e:?}")),
    }
}

fn fail(reason: String) -> TrialResult {
    let short = reason.split(['(', ' ', '{']).next().unwrap_or("").to_string();
    TrialResult {
        beats: None,
        features: None,
        failure: Some(short),
    }
}

/// Absolute errors of the model on every row of a trial, with categories.
fn row_errors(wf: &WindowFeatures, model: &TrainedModel) -> Vec<(f64, BpCategory)> {
    wf.rows
        .iter()
        .map(|r| {
            let pred = model.predict_row(&r.features.to_array());
            ((pred - r.target.get(model.target)).abs(), r.target.category)
        })
        .collect()
}

/// Runs the clean reference and every level over the same sub-windows.
pub fn stress_sweep(
    data: &[StressInput],
    model: &TrainedModel,
    cfg: &AnalysisConfig,
    spec: &NoiseSpec,
) -> Result<StressReport, NoiseError> {
    spec.validate()?;
    let windows = trial_windows(data, spec)?;
    let clean: Vec<TrialResult> = windows
        .iter()
        .map(|w| run_trial(&data[w.input], w, f64::INFINITY, cfg))
        .collect();
    let clean_trial_mae: Vec<f64> = clean
        .iter()
        .filter_map(|r| r.features.as_ref())
        .map(|wf| stats::mean(&row_errors(wf, model).iter().map(|e| e.0).collect::<Vec<_>>()))
        .collect();
    let boot_seed = |tag: u64| splitmix64(spec.seed ^ tag);
    let header = StressHeader {
        seed: spec.seed,
        trials_per_level: spec.trials_per_level,
        window_s: spec.window_s,
        bootstrap_resamples: spec.bootstrap_resamples,
        target: model.target.as_str().to_string(),
        aggregation: AGGREGATION.to_string(),
        clean_mae: bootstrap_mean(&clean_trial_mae, spec.bootstrap_resamples, boot_seed(f64::INFINITY.to_bits())),
        clean_successes: clean_trial_mae.len(),
    };

    let mut levels = Vec::with_capacity(spec.snr_levels_db.len());
    let mut displacements = Vec::new();
    for &snr in &spec.snr_levels_db {
        let mut failures = BTreeMap::new();
        let mut trial_mae = Vec::new();
        let mut trial_rmse = Vec::new();
        let mut cat_errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut per_landmark: Vec<(Vec<f64>, usize)> = vec![(Vec::new(), 0); LANDMARKS.len()];
        let mut per_landmark_det = per_landmark.clone();
        for (t, w) in windows.iter().enumerate() {
            let d = &data[w.input];
            let res = run_trial(d, w, snr, cfg);
            if let Some(f) = &res.failure {
                log::debug!("snr {snr} trial {t}: {f}");
                *failures.entry(f.clone()).or_insert(0) += 1;
            }
            if let Some(wf) = &res.features {
                let errs = row_errors(wf, model);
                trial_mae.push(stats::mean(&errs.iter().map(|e| e.0).collect::<Vec<_>>()));
                for (e, c) in errs {
                    cat_errors.entry(c.as_str().to_string()).or_default().push(e);
                }
                let rel: Vec<f64> = wf.analyses.iter().map(|(_, a)| a.reconstruction.relative_rmse()).collect();
                trial_rmse.push(stats::mean(&rel));
            }
            let Some(cb) = &clean[t].beats else { continue };
            let max_dist = 0.5 * cb.rr_median * d.fs;
            for (stage, acc, pick) in [
                ("smoothed", &mut per_landmark, (|b: &WindowBeats| &b.beats) as fn(&WindowBeats) -> &Vec<Beat>),
                ("detected", &mut per_landmark_det, |b: &WindowBeats| &b.detected),
            ] {
                let noisy_beats: &[Beat] = res.beats.as_ref().map_or(&[], |b| pick(b));
                let clean_beats = pick(cb);
                let matches = match_beats(clean_beats, noisy_beats, max_dist);
                for (c, m) in clean_beats.iter().zip(matches) {
                    let disp = m
                        .and_then(|j| beat_displacement(c, &noisy_beats[j], d.fs).ok())
                        .unwrap_or(LANDMARKS.map(|n| (n, None)));
                    for (k, (name, v)) in disp.iter().enumerate() {
                        match v {
                            Some(s) => acc[k].0.push(*s),
                            None => acc[k].1 += 1,
                        }
                        displacements.push(DisplacementRecord {
                            snr_db: snr,
                            stage,
                            trial: t,
                            subject_id: d.subject_id.clone(),
                            clean_peak: w.start + abs_peak(c),
                            landmark: name.to_string(),
                            seconds: *v,
                        });
                    }
                }
            }
        }
        let successes = trial_mae.len();
        let tag = snr.to_bits();
        levels.push(LevelReport {
            snr_db: snr,
            trials: windows.len(),
            successes,
            success_rate: successes as f64 / windows.len() as f64,
            failures,
            recon_rmse: bootstrap_mean(&trial_rmse, spec.bootstrap_resamples, boot_seed(tag ^ 1)),
            mae: bootstrap_mean(&trial_mae, spec.bootstrap_resamples, boot_seed(tag ^ 2)),
            mae_by_category: cat_errors.iter().map(|(k, v)| (k.clone(), stats::mean(v))).collect(),
            landmarks: LANDMARKS
                .iter()
                .zip(per_landmark.iter().zip(&per_landmark_det))
                .map(|(name, ((v, missing), (det, _)))| LandmarkStats {
                    landmark: name.to_string(),
                    mean_s: (!v.is_empty()).then(|| stats::mean(v)),
                    p95_s: (!v.is_empty()).then(|| stats::percentile(v, 95.0)),
                    n_matched: v.len(),
                    n_missing: *missing,
                    detected_mean_s: (!det.is_empty()).then(|| stats::mean(det)),
                    detected_p95_s: (!det.is_empty()).then(|| stats::percentile(det, 95.0)),
                })
                .collect(),
        });
        log::info!("snr {snr} dB: {successes}/{} trials succeeded", windows.len());
    }
    Ok(StressReport {
        header,
        levels,
        displacements,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

/// One row per (level, landmark); level-wide columns repeat. Leading `#`
/// lines carry the header.
pub fn stress_csv(report: &StressReport) -> String {
    let h = &report.header;
    let mut s = String::new();
    let _ = writeln!(s, "# trials_per_level={} seed={} window_s={} bootstrap_resamples={} target={}",
        h.trials_per_level, h.seed, h.window_s, h.bootstrap_resamples, h.target);
    let _ = writeln!(s, "# aggregation: {}", h.aggregation);
    let _ = writeln!(s, "# clean_mae={}", opt(h.clean_mae.map(|e| e.mean)));
    s.push_str("snr_db,landmark,disp_mean_s,disp_p95_s,n_matched,n_missing,detected_mean_s,detected_p95_s,");
    s.push_str("trials,successes,success_rate,");
    s.push_str("recon_rmse,recon_rmse_ci_lo,recon_rmse_ci_hi,mae,mae_ci_lo,mae_ci_hi");
    for c in BpCategory::ALL {
        let _ = write!(s, ",mae_{}", c.as_str());
    }
    s.push('\n');
    for l in &report.levels {
        for lm in &l.landmarks {
            let _ = write!(
                s,
                "{:?},{},{},{},{},{},{},{},{},{},{:?},{},{},{},{},{},{}",
                l.snr_db,
                lm.landmark,
                opt(lm.mean_s),
                opt(lm.p95_s),
                lm.n_matched,
                lm.n_missing,
                opt(lm.detected_mean_s),
                opt(lm.detected_p95_s),
                l.trials,
                l.successes,
                l.success_rate,
                opt(l.recon_rmse.map(|e| e.mean)),
                opt(l.recon_rmse.map(|e| e.ci_lo)),
                opt(l.recon_rmse.map(|e| e.ci_hi)),
                opt(l.mae.map(|e| e.mean)),
                opt(l.mae.map(|e| e.ci_lo)),
                opt(l.mae.map(|e| e.ci_hi)),
            );
            for c in BpCategory::ALL {
                let _ = write!(s, ",{}", opt(l.mae_by_category.get(c.as_str()).copied()));
            }
            s.push('\n');
        }
    }
    s
}

pub fn fiducials_csv(report: &StressReport) -> String {
    let mut s = String::from("snr_db,stage,trial,subject_id,clean_peak,landmark,displacement_s\n");
    for r in &report.displacements {
        let _ = writeln!(
            s,
            "{:?},{},{},{},{},{},{}",
            r.snr_db,
            r.stage,
            r.trial,
            r.subject_id,
            r.clean_peak,
            r.landmark,
            opt(r.seconds)
        );
    }
    s
}

struct Series<'a> {
    title: &'a str,
    ylabel: &'a str,
    points: Vec<(f64, Estimate)>,
}

fn panel(s: &mut String, x0: f64, series: &Series) {
    let (w, h, pad) = (360.0, 240.0, 45.0);
    let pts: Vec<&(f64, Estimate)> = series.points.iter().filter(|p| p.0.is_finite()).collect();
    let _ = writeln!(s, r#"<g transform="translate({x0},0)">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, series.title);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="30" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad, w - 10.0, h - pad, h - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">SNR (dB)</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#,
        h / 2.0, h / 2.0, series.ylabel
    );
    if !pts.is_empty() {
        let xmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let xmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymax = pts.iter().map(|p| p.1.ci_hi.max(p.1.mean)).fold(0.0f64, f64::max).max(1e-12);
        let sx = |x: f64| pad + (x - xmin) / (xmax - xmin).max(1e-12) * (w - pad - 20.0);
        let sy = |y: f64| (h - pad) - y / ymax * (h - pad - 40.0);
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1.mean))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, line.join(" "));
        for p in &pts {
            let x = sx(p.0);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="gray"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
                sy(p.1.ci_lo), sy(p.1.ci_hi), sy(p.1.mean)
            );
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, h - pad + 14.0, p.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="38" font-size="10">max {:.4}</text>"#, pad + 4.0, ymax);
    }
    s.push_str("</g>\n");
}

/// Two line plots, MAE and reconstruction RMSE against SNR, with the plotted
/// numbers repeated in a comment.
pub fn stress_svg(report: &StressReport) -> String {
    let collect = |f: fn(&LevelReport) -> Option<Estimate>| {
        report.levels.iter().filter_map(|l| f(l).map(|e| (l.snr_db, e))).collect::<Vec<_>>()
    };
    let mae = Series {
        title: "MAE vs SNR",
        ylabel: "MAE (mmHg)",
        points: collect(|l| l.mae),
    };
    let rmse = Series {
        title: "Reconstruction RMSE vs SNR",
        ylabel: "relative RMSE",
        points: collect(|l| l.recon_rmse),
    };
    let mut s = String::from(r#"<svg xmlns="http://www.w3.org/2000/svg" width="740" height="250" font-family="sans-serif">"#);
    s.push('\n');
    s.push_str("<!--\nsnr_db,mae,mae_ci_lo,mae_ci_hi,recon_rmse,recon_rmse_ci_lo,recon_rmse_ci_hi,success_rate\n");
    for l in &report.levels {
        let _ = writeln!(
            s,
            "{:?},{},{},{},{},{},{},{:?}",
            l.snr_db,
            opt(l.mae.map(|e| e.mean)),
            opt(l.mae.map(|e| e.ci_lo)),
            opt(l.mae.map(|e| e.ci_hi)),
            opt(l.recon_rmse.map(|e| e.mean)),
            opt(l.recon_rmse.map(|e| e.ci_lo)),
            opt(l.recon_rmse.map(|e| e.ci_hi)),
            l.success_rate
        );
    }
    s.push_str("-->\n");
    panel(&mut s, 0.0, &mae);
    panel(&mut s, 370.0, &rmse);
    s.push_str("</svg>\n");
    s
}

/// Writes `stress.csv`, `stress.svg`, `fiducials.csv` and `stress.json`.
pub fn write_report(report: &StressReport, dir: &Path) -> Result<(), NoiseError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("stress.csv"), stress_csv(report))?;
    fs::write(dir.join("stress.svg"), stress_svg(report))?;
    fs::write(dir.join("fiducials.csv"), fiducials_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| NoiseError::Io(e.to_string()))?;
    fs::write(dir.join("stress.json"), json + "\n")?;
    Ok(())
}

/// Whether consecutive levels never rise beyond overlap of their intervals.
pub fn monotone_within_ci(points: &[Estimate]) -> bool {
    points
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean || w[1].ci_lo <= w[0].ci_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiducials::{Landmark, SdppgPoints};

    fn lm(index: usize) -> Landmark {
        Landmark { index, amplitude: 0.0 }
    }

    fn fid() -> PulseFiducials {
        PulseFiducials {
            valley_start: lm(0),
            sys_peak: lm(20),
            dicrotic_notch: lm(50),
            valley_end: lm(99),
            sdppg: SdppgPoints {
                a: Some(lm(8)),
                b: Some(lm(15)),
                c: None,
                d: None,
                e: Some(lm(45)),
            },
            rr_median: 0.8,
            notch_low_confidence: false,
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let x = [1.0, 2.0, 3.5];
        assert_eq!(add_awgn(&x, f64::INFINITY, 1).unwrap(), x.to_vec());
    }

    #[test]
    fn unit_sine_zero_db() {
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|i| 2f64.sqrt() * (0.01 * i as f64).sin()).collect();
        let y = add_awgn(&x, 0.0, 7).unwrap();
        let noise: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let p = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let px = mean_removed_power(&x);
        assert!((p / px - 1.0).abs() < 0.02, "noise power {p} vs {px}");
    }

    #[test]
    fn awgn_deterministic_and_mean_zero() {
        let x: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.05).sin()).collect();
        let a = add_awgn(&x, 10.0, 3).unwrap();
        assert_eq!(a, add_awgn(&x, 10.0, 3).unwrap());
        assert_ne!(a, add_awgn(&x, 10.0, 4).unwrap());
        assert_eq!(a.len(), x.len());
        let noise: Vec<f64> = a.iter().zip(&x).map(|(p, q)| p - q).collect();
        let sd = stats::population_sd(&noise);
        assert!(stats::mean(&noise).abs() < 3.0 * sd / (noise.len() as f64).sqrt());
        let snr = 10.0 * (mean_removed_power(&x) / noise.iter().map(|v| v * v).sum::<f64>() * 5000.0).log10();
        assert!((snr - 10.0).abs() < 0.5, "{snr}");
    }

    #[test]
    fn awgn_guards() {
        assert_eq!(add_awgn(&[2.0; 10], 10.0, 0), Err(NoiseError::ZeroPowerSignal));
        assert!(add_awgn(&[1.0, 2.0], f64::NAN, 0).is_err());
    }

    #[test]
    fn wander_guards() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(add_baseline_wander(&x, 125.0, 0.0, 0.2, 1).unwrap(), x.to_vec());
        assert_eq!(
            add_baseline_wander(&x, 125.0, 0.5, 0.6, 1),
            Err(NoiseError::FrequencyInBand(0.6))
        );
    }

    #[test]
    fn displacement_arithmetic() {
        let c = fid();
        let d = fiducial_displacement(&c, &c, 125.0).unwrap();
        assert!(d.iter().all(|(_, v)| v.is_none_or(|s| s == 0.0)));
        let mut n = fid();
        n.dicrotic_notch.index = 54;
        n.sdppg.e = None;
        let d = fiducial_displacement(&c, &n, 125.0).unwrap();
        let get = |k: &str| d.iter().find(|(n, _)| *n == k).unwrap().1;
        assert!((get("dicrotic_notch").unwrap() - 0.032).abs() < 1e-15);
        assert_eq!(get("e"), None);
        assert_eq!(get("c"), None);
        assert_eq!(get("sys_peak"), Some(0.0));
    }

    #[test]
    fn snr_parsing() {
        assert_eq!(
            parse_snr_levels("5:35:5").unwrap(),
            vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]
        );
        assert_eq!(parse_snr_levels("10,20").unwrap(), vec![10.0, 20.0]);
        assert_eq!(parse_snr_levels("inf").unwrap(), vec![f64::INFINITY]);
        assert!(parse_snr_levels("5:1:1").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = NoiseSpec::default();
        assert!(s.validate().is_ok());
        s.snr_levels_db = vec![10.0, 5.0];
        assert!(s.validate().is_err());
        s.snr_levels_db = vec![f64::INFINITY];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let x: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let e = bootstrap_mean(&x, 500, 1).unwrap();
        assert!(e.ci_lo <= e.mean && e.mean <= e.ci_hi);
        assert_eq!(e, bootstrap_mean(&x, 500, 1).unwrap());
        assert!(bootstrap_mean(&[], 10, 1).is_none());
    }

    #[test]
    fn monotone_check() {
        let e = |m: f64, lo: f64, hi: f64| Estimate { mean: m, ci_lo: lo, ci_hi: hi, n: 10 };
        assert!(monotone_within_ci(&[e(5.0, 4.0, 6.0), e(5.5, 4.5, 6.5), e(3.0, 2.0, 4.0)]));
        assert!(!monotone_within_ci(&[e(3.0, 2.5, 3.5), e(5.0, 4.0, 6.0)]));
    }
}
