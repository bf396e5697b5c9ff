//! The 38-slot per-pulse feature vector and per-pulse BP targets.
//!
//! Column order is fixed by [`FEATURE_NAMES`]; the CSV written by
//! [`write_feature_csv`] is the exchange format for external model code.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{Read, Write};
use thiserror::Error;

use crate::fiducials::{self, Beat, Polarity, Pulse, PulseFiducials};
use crate::scsa::{self, ChiGridConfig, PhaseSplit, ReconstructionResult, SchrodingerSpectrum};
use crate::stats;

pub const N_KAPPA: usize = 20;
pub const N_FEATURES: usize = 38;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "kappa_01", "kappa_02", "kappa_03", "kappa_04", "kappa_05", "kappa_06", "kappa_07",
    "kappa_08", "kappa_09", "kappa_10", "kappa_11", "kappa_12", "kappa_13", "kappa_14",
    "kappa_15", "kappa_16", "kappa_17", "kappa_18", "kappa_19", "kappa_20", "inv_sum",
    "sys_inv1", "sys_inv2", "dia_inv1", "dia_inv2", "ppg_psi", "b_a", "c_a", "d_a", "e_a",
    "t_a", "t_ba", "t_cb", "t_dc", "t_ed", "ai", "bw66", "pir_p",
];

/// Fraction of the pulse height at which the branch width is measured.
pub const BRANCH_LEVEL: f64 = 0.66;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error(transparent)]
    Scsa(#[from] scsa::ScsaError),
    #[error(transparent)]
    Fiducial(#[from] fiducials::FiducialError),
    #[error("a phase of the split is flat")]
    DegenerateSplit,
    #[error("SDPPG a-wave missing")]
    MissingAWave,
    #[error("SDPPG {0}-wave missing")]
    MissingWave(char),
    #[error("branch never crosses the {0} level")]
    NoCrossing(f64),
    #[error("systolic peak does not exceed the valleys")]
    FlatPulse,
    #[error("valley intensity {0} cannot form an intensity ratio")]
    InvalidIntensity(f64),
    #[error("feature {0} is not finite")]
    NonFinite(&'static str),
    #[error("need at least {need} rows, have {have}")]
    TooFewRows { need: usize, have: usize },
    #[error("every column is constant: {0:?}")]
    ConstantColumn(Vec<String>),
    #[error("feature CSV: {0}")]
    Csv(String),
}

/// SCSA part of the vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScsaFeatures {
    pub kappa: [f64; N_KAPPA],
    /// Bound states present before padding (capped at 20).
    pub n_kappa: usize,
    pub inv_sum: f64,
    pub sys_inv1: f64,
    pub sys_inv2: f64,
    pub dia_inv1: f64,
    pub dia_inv2: f64,
}

/// `4h sum(kappa)` and `16h/3 sum(kappa^3)` over a slice.
pub fn invariants(h: f64, kappas: &[f64]) -> (f64, f64) {
    let s1: f64 = kappas.iter().sum();
    let s3: f64 = kappas.iter().map(|k| k * k * k).sum();
    (4.0 * h * s1, 16.0 * h / 3.0 * s3)
}

pub fn scsa_features(spec: &SchrodingerSpectrum, split: &PhaseSplit) -> Result<ScsaFeatures, FeatureError> {
    if spec.n_h < 2 {
        return Err(scsa::ScsaError::TooFewSolitons(spec.n_h).into());
    }
    let mut kappa = [0.0; N_KAPPA];
    for (slot, k) in kappa.iter_mut().zip(&spec.kappas) {
        *slot = *k;
    }
    let ns = split.n_s;
    let (sys_inv1, sys_inv2) = invariants(spec.h, &spec.kappas[..ns]);
    let (dia_inv1, dia_inv2) = invariants(spec.h, &spec.kappas[ns..]);
    Ok(ScsaFeatures {
        kappa,
        n_kappa: spec.n_h.min(N_KAPPA),
        inv_sum: invariants(spec.h, &spec.kappas).0,
        sys_inv1,
        sys_inv2,
        dia_inv1,
        dia_inv2,
    })
}

/// Time between the maxima of the systolic and diastolic partial sums.
pub fn ppg_psi(split: &PhaseSplit, dt: f64) -> Result<f64, FeatureError> {
    let flat = |x: &[f64]| {
        x.is_empty() || x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            <= x.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if flat(&split.p_s) || flat(&split.p_d) {
        return Err(FeatureError::DegenerateSplit);
    }
    let s = stats::argmax(&split.p_s).unwrap();
    let d = stats::argmax(&split.p_d).unwrap();
    Ok(s.abs_diff(d) as f64 * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdppgFeatures {
    pub b_a: f64,
    pub c_a: f64,
    pub d_a: f64,
    pub e_a: f64,
    pub t_a: f64,
    pub t_ba: f64,
    pub t_cb: f64,
    pub t_dc: f64,
    pub t_ed: f64,
    pub ai: f64,
}

/// Ratios on signed amplitudes and inter-wave times; `t_a` is measured from
/// the start valley.
pub fn sdppg_features(f: &PulseFiducials, fs: f64) -> Result<SdppgFeatures, FeatureError> {
    let a = f.sdppg.a.ok_or(FeatureError::MissingAWave)?;
    let get = |c: char| f.sdppg.get(c).ok_or(FeatureError::MissingWave(c));
    let (b, c, d, e) = (get('b')?, get('c')?, get('d')?, get('e')?);
    let dt = |x: usize, y: usize| (x as f64 - y as f64) / fs;
    Ok(SdppgFeatures {
        b_a: b.amplitude / a.amplitude,
        c_a: c.amplitude / a.amplitude,
        d_a: d.amplitude / a.amplitude,
        e_a: e.amplitude / a.amplitude,
        t_a: dt(a.index, f.valley_start.index),
        t_ba: dt(b.index, a.index),
        t_cb: dt(c.index, b.index),
        t_dc: dt(d.index, c.index),
        t_ed: dt(e.index, d.index),
        ai: (b.amplitude - c.amplitude - d.amplitude - e.amplitude) / a.amplitude,
    })
}

/// Width of the pulse at 66% of its height above the start valley, as a
/// fraction of the pulse duration. Crossings are linearly interpolated.
pub fn bw66(samples: &[f64], peak: usize) -> Result<f64, FeatureError> {
    let n = samples.len();
    if peak == 0 || peak + 1 >= n {
        return Err(FeatureError::FlatPulse);
    }
    let base = samples[0];
    let top = samples[peak];
    if !(top > base && top > samples[n - 1]) {
        return Err(FeatureError::FlatPulse);
    }
    let level = base + BRANCH_LEVEL * (top - base);
    // last upward crossing before the peak
    let rise = (0..peak)
        .rev()
        .find(|&i| samples[i] < level && samples[i + 1] >= level)
        .map(|i| i as f64 + (level - samples[i]) / (samples[i + 1] - samples[i]))
        .ok_or(FeatureError::NoCrossing(BRANCH_LEVEL))?;
    // first downward crossing after it
    let fall = (peak..n - 1)
        .find(|&i| samples[i] >= level && samples[i + 1] < level)
        .map(|i| i as f64 + (samples[i] - level) / (samples[i] - samples[i + 1]))
        .ok_or(FeatureError::NoCrossing(BRANCH_LEVEL))?;
    Ok((fall - rise) / (n - 1) as f64)
}

/// Peak over start-valley intensity.
pub fn pir(peak: f64, valley: f64) -> Result<f64, FeatureError> {
    if valley == 0.0 || !valley.is_finite() || !peak.is_finite() {
        return Err(FeatureError::InvalidIntensity(valley));
    }
    Ok(peak / valley)
}

/// `(bw66, pir_p)`; the intensity ratio uses the unfiltered samples when the
/// pulse carries them.
pub fn ppg_morph_features(p: &Pulse, f: &PulseFiducials) -> Result<(f64, f64), FeatureError> {
    let w = bw66(&p.samples, f.sys_peak.index)?;
    let src = p.raw.as_deref().unwrap_or(&p.samples);
    let r = pir(src[f.sys_peak.index], src[f.valley_start.index])?;
    Ok((w, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub scsa: ScsaFeatures,
    pub ppg_psi: f64,
    pub sdppg: SdppgFeatures,
    pub bw66: f64,
    pub pir_p: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        let s = &self.scsa;
        let d = &self.sdppg;
        let mut out = [0.0; N_FEATURES];
        out[..N_KAPPA].copy_from_slice(&s.kappa);
        let rest = [
            s.inv_sum, s.sys_inv1, s.sys_inv2, s.dia_inv1, s.dia_inv2, self.ppg_psi, d.b_a, d.c_a,
            d.d_a, d.e_a, d.t_a, d.t_ba, d.t_cb, d.t_dc, d.t_ed, d.ai, self.bw66, self.pir_p,
        ];
        out[N_KAPPA..].copy_from_slice(&rest);
        out
    }

    pub fn from_array(v: &[f64; N_FEATURES], n_kappa: usize) -> Self {
        let mut kappa = [0.0; N_KAPPA];
        kappa.copy_from_slice(&v[..N_KAPPA]);
        let r = &v[N_KAPPA..];
        FeatureVector {
            scsa: ScsaFeatures {
                kappa,
                n_kappa,
                inv_sum: r[0],
                sys_inv1: r[1],
                sys_inv2: r[2],
                dia_inv1: r[3],
                dia_inv2: r[4],
            },
            ppg_psi: r[5],
            sdppg: SdppgFeatures {
                b_a: r[6],
                c_a: r[7],
                d_a: r[8],
                e_a: r[9],
                t_a: r[10],
                t_ba: r[11],
                t_cb: r[12],
                t_dc: r[13],
                t_ed: r[14],
                ai: r[15],
            },
            bw66: r[16],
            pir_p: r[17],
        }
    }

    fn check_finite(&self) -> Result<(), FeatureError> {
        for (v, name) in self.to_array().iter().zip(FEATURE_NAMES) {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite(name));
            }
        }
        Ok(())
    }
}

/// SCSA outcome of one beat in the form stored between pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsaBeat {
    pub pulse_start: usize,
    pub chi: f64,
    pub h: f64,
    pub n_h: usize,
    pub n_s: usize,
    pub rmse: f64,
    pub relative_rmse: f64,
    pub target_met: bool,
    /// Value subtracted from the pulse to make it nonnegative.
    pub offset: f64,
    pub scsa: ScsaFeatures,
    pub ppg_psi: f64,
}

/// Everything computed for one beat.
#[derive(Debug, Clone)]
pub struct PulseAnalysis {
    pub features: FeatureVector,
    pub summary: ScsaBeat,
    pub reconstruction: ReconstructionResult,
    pub split: PhaseSplit,
}

/// Min-shifts the pulse, searches h on the chi grid and splits the phases.
pub fn scsa_beat(
    beat: &Beat,
    grid_cfg: &ChiGridConfig,
) -> Result<(ScsaBeat, ReconstructionResult, PhaseSplit), FeatureError> {
    let p = &beat.pulse;
    let dt = 1.0 / p.fs;
    let offset = p.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let y: Vec<f64> = p.samples.iter().map(|v| v - offset).collect();
    let grid = scsa::chi_grid(&y, dt, grid_cfg)?;
    let search = scsa::optimize_h(&y, dt, &grid, grid_cfg.n_h_target, grid_cfg.discretization)?;
    let res = search.result;
    let spec = &res.spectrum;
    let split = scsa::split_phases(spec)?;
    let summary = ScsaBeat {
        pulse_start: p.start,
        chi: spec.chi,
        h: spec.h,
        n_h: spec.n_h,
        n_s: split.n_s,
        rmse: res.rmse,
        relative_rmse: res.relative_rmse(),
        target_met: search.target_met,
        offset,
        scsa: scsa_features(spec, &split)?,
        ppg_psi: ppg_psi(&split, dt)?,
    };
    Ok((summary, res, split))
}

/// Combines stored SCSA results with the morphology of the beat.
pub fn beat_features(beat: &Beat, s: &ScsaBeat) -> Result<FeatureVector, FeatureError> {
    let p = &beat.pulse;
    let (bw66, pir_p) = ppg_morph_features(p, &beat.fiducials)?;
    let features = FeatureVector {
        scsa: s.scsa,
        ppg_psi: s.ppg_psi,
        sdppg: sdppg_features(&beat.fiducials, p.fs)?,
        bw66,
        pir_p,
    };
    features.check_finite()?;
    Ok(features)
}

/// Both halves for one beat: all 38 slots plus the reconstruction.
pub fn analyze_beat(beat: &Beat, grid_cfg: &ChiGridConfig) -> Result<PulseAnalysis, FeatureError> {
    let (summary, reconstruction, split) = scsa_beat(beat, grid_cfg)?;
    let features = beat_features(beat, &summary)?;
    Ok(PulseAnalysis {
        features,
        summary,
        reconstruction,
        split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BpCategory {
    Hypotensive,
    Normotensive,
    Hypertensive,
}

impl BpCategory {
    pub const ALL: [BpCategory; 3] = [
        BpCategory::Hypotensive,
        BpCategory::Normotensive,
        BpCategory::Hypertensive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BpCategory::Hypotensive => "hypotensive",
            BpCategory::Normotensive => "normotensive",
            BpCategory::Hypertensive => "hypertensive",
        }
    }
}

impl std::str::FromStr for BpCategory {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hypotensive" => Ok(BpCategory::Hypotensive),
            "normotensive" => Ok(BpCategory::Normotensive),
            "hypertensive" => Ok(BpCategory::Hypertensive),
            other => Err(FeatureError::Csv(format!("unknown category {other:?}"))),
        }
    }
}

/// Category cut-offs in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategoryThresholds {
    /// Hypotensive below either of these.
    pub hypo_sbp: f64,
    pub hypo_dbp: f64,
    /// Hypertensive at or above either of these.
    pub hyper_sbp: f64,
    pub hyper_dbp: f64,
}

impl Default for CategoryThresholds {
    fn default() -> Self {
        CategoryThresholds {
            hypo_sbp: 100.0,
            hypo_dbp: 60.0,
            hyper_sbp: 140.0,
            hyper_dbp: 90.0,
        }
    }
}

impl CategoryThresholds {
    pub fn classify(&self, sbp: f64, dbp: f64) -> BpCategory {
        if sbp < self.hypo_sbp || dbp < self.hypo_dbp {
            BpCategory::Hypotensive
        } else if sbp >= self.hyper_sbp || dbp >= self.hyper_dbp {
            BpCategory::Hypertensive
        } else {
            BpCategory::Normotensive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpTarget {
    pub sbp: f64,
    pub dbp: f64,
    pub map: f64,
    pub category: BpCategory,
}

impl BpTarget {
    pub fn new(sbp: f64, dbp: f64, thresholds: &CategoryThresholds) -> Self {
        BpTarget {
            sbp,
            dbp,
            map: (sbp + 2.0 * dbp) / 3.0,
            category: thresholds.classify(sbp, dbp),
        }
    }

    pub fn get(&self, t: Target) -> f64 {
        match t {
            Target::Sbp => self.sbp,
            Target::Dbp => self.dbp,
            Target::Map => self.map,
        }
    }
}

/// Which BP value a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Sbp,
    Dbp,
    Map,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Sbp, Target::Dbp, Target::Map];

    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Sbp => "sbp",
            Target::Dbp => "dbp",
            Target::Map => "map",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sbp" => Ok(Target::Sbp),
            "dbp" => Ok(Target::Dbp),
            "map" => Ok(Target::Map),
            o => Err(format!("unknown target {o:?}")),
        }
    }
}

/// Beat extrema of an arterial waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AbpBeats {
    pub peaks: Vec<usize>,
    pub valleys: Vec<usize>,
}

pub fn abp_beats(abp: &[f64]) -> Result<AbpBeats, FeatureError> {
    Ok(AbpBeats {
        peaks: fiducials::ampd_peaks(abp, Polarity::Peaks)?,
        valleys: fiducials::ampd_peaks(abp, Polarity::Valleys)?,
    })
}

/// Median systolic and diastolic pressure of a segment.
pub fn bp_targets(abp: &[f64], thresholds: &CategoryThresholds) -> Result<BpTarget, FeatureError> {
    let beats = abp_beats(abp)?;
    targets_between(abp, &beats, 0, abp.len(), thresholds)
}

fn targets_between(
    abp: &[f64],
    beats: &AbpBeats,
    lo: usize,
    hi: usize,
    thresholds: &CategoryThresholds,
) -> Result<BpTarget, FeatureError> {
    let pick = |idx: &[usize]| -> Vec<f64> {
        idx.iter().filter(|&&i| i >= lo && i < hi).map(|&i| abp[i]).collect()
    };
    let p = pick(&beats.peaks);
    let v = pick(&beats.valleys);
    if p.len() < 3 || v.is_empty() {
        return Err(fiducials::FiducialError::NoBeats.into());
    }
    Ok(BpTarget::new(stats::median(&p), stats::median(&v), thresholds))
}

/// Beats on each side of a pulse used for its own BP target.
pub const TARGET_HALF_BEATS: f64 = 2.5;

/// Target for one PPG pulse: medians of the arterial extrema within
/// `TARGET_HALF_BEATS` median beat intervals of the pulse centre.
pub fn pulse_bp_target(
    abp: &[f64],
    beats: &AbpBeats,
    pulse: &Pulse,
    rr_samples: f64,
    thresholds: &CategoryThresholds,
) -> Result<BpTarget, FeatureError> {
    let centre = pulse.start as f64 + pulse.len() as f64 / 2.0;
    let half = TARGET_HALF_BEATS * rr_samples;
    let lo = (centre - half).max(0.0) as usize;
    let hi = ((centre + half).ceil() as usize).min(abp.len());
    targets_between(abp, beats, lo, hi, thresholds)
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub subject_id: String,
    /// Start sample of the pulse inside its window.
    pub pulse_start: usize,
    pub features: FeatureVector,
    pub target: BpTarget,
}

/// Header: identifiers, the 38 features, the kappa mask column, targets.
pub fn csv_header() -> Vec<String> {
    let mut h = vec!["subject_id".to_string(), "pulse_start".to_string()];
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.extend(["n_kappa", "sbp", "dbp", "map", "category"].map(String::from));
    h
}

pub fn write_feature_csv<W: Write>(w: W, rows: &[FeatureRow]) -> Result<(), FeatureError> {
    let err = |e: csv::Error| FeatureError::Csv(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(csv_header()).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.subject_id.clone(), r.pulse_start.to_string()];
        rec.extend(r.features.to_array().iter().map(|v| format!("{v:?}")));
        rec.push(r.features.scsa.n_kappa.to_string());
        for v in [r.target.sbp, r.target.dbp, r.target.map] {
            rec.push(format!("{v:?}"));
        }
        rec.push(r.target.category.as_str().to_string());
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(r: R) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| FeatureError::Csv(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != csv_header() {
        return Err(FeatureError::Csv("unexpected header".into()));
    }
    let num = |s: &str| -> Result<f64, FeatureError> {
        s.parse::<f64>().map_err(|_| FeatureError::Csv(format!("bad number {s:?}")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| FeatureError::Csv(e.to_string()))?;
        let mut v = [0.0; N_FEATURES];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = num(&rec[2 + k])?;
        }
        let n_kappa = rec[2 + N_FEATURES]
            .parse::<usize>()
            .map_err(|_| FeatureError::Csv("bad n_kappa".into()))?;
        let o = 3 + N_FEATURES;
        rows.push(FeatureRow {
            subject_id: rec[0].to_string(),
            pulse_start: rec[1]
                .parse()
                .map_err(|_| FeatureError::Csv("bad pulse_start".into()))?,
            features: FeatureVector::from_array(&v, n_kappa),
            target: BpTarget {
                sbp: num(&rec[o])?,
                dbp: num(&rec[o + 1])?,
                map: num(&rec[o + 2])?,
                category: rec[o + 3].parse()?,
            },
        });
    }
    Ok(rows)
}

/// Feature matrix and targets in row order.
pub fn assemble_matrix(rows: &[FeatureRow]) -> Result<(Vec<Vec<f64>>, Vec<BpTarget>), FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::TooFewRows {
            need: 2,
            have: rows.len(),
        });
    }
    Ok(rows
        .iter()
        .map(|r| (r.features.to_array().to_vec(), r.target))
        .unzip())
}

/// Column means and sample SDs fitted on training rows. Constant columns are
/// dropped from the transformed output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Indices of the columns kept, ascending.
    pub kept: Vec<usize>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>], names: &[&str]) -> Result<Self, FeatureError> {
        if x.len() < 2 {
            return Err(FeatureError::TooFewRows { need: 2, have: x.len() });
        }
        let d = x[0].len();
        let mut mean = Vec::with_capacity(d);
        let mut sd = Vec::with_capacity(d);
        let mut kept = Vec::new();
        let mut constant = Vec::new();
        for j in 0..d {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            let m = stats::mean(&col);
            let s = stats::sample_sd(&col);
            mean.push(m);
            sd.push(s);
            if s > 0.0 && s.is_finite() {
                kept.push(j);
            } else {
                let name = names.get(j).map(|s| s.to_string()).unwrap_or(j.to_string());
                log::warn!("dropping constant column {name}");
                constant.push(name);
            }
        }
        if kept.is_empty() {
            return Err(FeatureError::ConstantColumn(constant));
        }
        Ok(Standardizer { mean, sd, kept })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .map(|&j| (row[j] - self.mean[j]) / self.sd[j])
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Distinct subject ids, sorted.
pub fn subjects(rows: &[FeatureRow]) -> BTreeSet<String> {
    rows.iter().map(|r| r.subject_id.clone()).collect()
}
