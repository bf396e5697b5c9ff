//! Synthetic PPG/ABP records with known blood pressure.
//!
//! Each beat of the PPG is a sum of five Gaussian waves (systolic, reflected,
//! dicrotic and two late diastolic components). The reflected and dicrotic
//! waves move and grow with systolic pressure and the pulse amplitude follows
//! the pulse pressure, so the morphology carries the BP signal. The ABP beat
//! is the same shape rescaled to run from DBP to SBP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::ingest::{self, IngestError, SignalRecord, Source};

/// One Gaussian wave: centre and width as fractions of the beat period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub mu: f64,
    pub sigma: f64,
    pub amp: f64,
}

/// Morphology drift per 40 mmHg of systolic pressure above 120, clamped.
fn stiffness(sbp: f64) -> f64 {
    ((sbp - 120.0) / 40.0).clamp(-1.0, 1.3)
}

/// The five waves of a beat at the given systolic pressure.
pub fn beat_waves(sbp: f64) -> [Wave; 5] {
    let d = stiffness(sbp);
    [
        Wave { mu: 0.19, sigma: 0.055, amp: 1.0 },
        Wave { mu: 0.31 - 0.02 * d, sigma: 0.075, amp: 0.50 + 0.10 * d },
        Wave { mu: 0.54 - 0.03 * d, sigma: 0.085, amp: 0.30 - 0.05 * d },
        Wave { mu: 0.72, sigma: 0.10, amp: 0.12 },
        Wave { mu: 0.87, sigma: 0.10, amp: 0.04 },
    ]
}

/// Beat shape at phase `u` (in periods from onset) and its second derivative
/// with respect to time for a period of `period` seconds.
pub fn beat_shape(waves: &[Wave], u: f64, period: f64) -> (f64, f64) {
    let mut y = 0.0;
    let mut d2 = 0.0;
    for w in waves {
        let z = (u - w.mu) / w.sigma;
        let g = w.amp * (-0.5 * z * z).exp();
        y += g;
        let s = w.sigma * period;
        d2 += g * (z * z - 1.0) / (s * s);
    }
    (y, d2)
}

/// One isolated beat sampled at `fs` over one period, onset at sample 0.
pub fn canonical_pulse(fs: f64, period: f64, sbp: f64) -> Vec<f64> {
    let waves = beat_waves(sbp);
    let n = (period * fs).round() as usize + 1;
    (0..n).map(|i| beat_shape(&waves, i as f64 / (fs * period), period).0).collect()
}

/// Ground-truth description of one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub id: String,
    pub sbp: f64,
    pub dbp: f64,
    pub heart_rate_bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub subjects: Vec<SubjectSpec>,
    /// Peak-to-peak swing of the slow SBP oscillation; DBP swings half as much.
    pub sbp_swing: f64,
    /// White measurement noise on the PPG, relative to the pulse amplitude.
    pub noise_rel: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = |id: &str, sbp, dbp, hr| SubjectSpec {
            id: id.into(),
            sbp,
            dbp,
            heart_rate_bpm: hr,
        };
        SynthConfig {
            fs: 125.0,
            duration_s: 600.0,
            subjects: vec![
                s("syn01", 106.0, 68.0, 72.0),
                s("syn02", 117.0, 75.0, 66.0),
                s("syn03", 128.0, 82.0, 78.0),
                s("syn04", 140.0, 88.0, 62.0),
                s("syn05", 152.0, 94.0, 70.0),
            ],
            sbp_swing: 24.0,
            noise_rel: 0.005,
        }
    }
}

/// DC level of the optical signal, in arbitrary units.
const PPG_DC: f64 = 2.0;

/// Generates one subject. The same `(spec, cfg, seed)` always gives the same
/// record.
pub fn generate_subject(spec: &SubjectSpec, cfg: &SynthConfig, seed: u64) -> SignalRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (cfg.duration_s * cfg.fs).round() as usize;
    let fs = cfg.fs;
    // slow BP oscillation plus a second, incommensurate one
    let p1 = rng.gen_range(150.0..250.0);
    let p2 = rng.gen_range(60.0..90.0);
    let ph1 = rng.gen_range(0.0..2.0 * PI);
    let ph2 = rng.gen_range(0.0..2.0 * PI);
    let bp_at = |t: f64| {
        let s = 0.75 * (2.0 * PI * t / p1 + ph1).sin() + 0.25 * (2.0 * PI * t / p2 + ph2).sin();
        let sbp = spec.sbp + 0.5 * cfg.sbp_swing * s;
        let dbp = spec.dbp + 0.25 * cfg.sbp_swing * s;
        (sbp, dbp)
    };
    let jitter = Normal::new(0.0, 0.02).unwrap();

    let mut ppg = vec![0.0; n];
    let mut abp = vec![0.0; n];
    let mut onset = rng.gen_range(0.0..0.5);
    let mut first = true;
    // ABP before the first onset rests at the first diastolic value
    while onset < cfg.duration_s {
        let (sbp, dbp) = bp_at(onset);
        let hr = spec.heart_rate_bpm * (1.0 + jitter.sample(&mut rng) * 0.5);
        let period = 60.0 / hr;
        let waves = beat_waves(sbp);
        let amp = 0.5 + 0.01 * (sbp - dbp - 40.0);
        let i0 = (onset * fs).ceil() as usize;
        // PPG: the beat and its tail
        let tail_end = (((onset + 1.6 * period) * fs).ceil() as usize).min(n);
        for (i, v) in ppg.iter_mut().enumerate().take(tail_end).skip(i0) {
            let u = (i as f64 / fs - onset) / period;
            *v += amp * beat_shape(&waves, u, period).0;
        }
        // ABP: the beat rescaled onto [dbp, sbp] over exactly one period
        let i1 = (((onset + period) * fs).ceil() as usize).min(n);
        let shape: Vec<f64> = (i0..i1)
            .map(|i| beat_shape(&waves, (i as f64 / fs - onset) / period, period).0)
            .collect();
        if !shape.is_empty() {
            let lo = shape.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = shape.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (k, s) in shape.iter().enumerate() {
                abp[i0 + k] = dbp + (sbp - dbp) * (s - lo) / (hi - lo);
            }
        }
        if first {
            abp[..i0.min(n)].fill(dbp);
            first = false;
        }
        onset += period;
    }

    let wander_ph = rng.gen_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, cfg.noise_rel * 0.5).unwrap();
    for (i, v) in ppg.iter_mut().enumerate() {
        let t = i as f64 / fs;
        *v += PPG_DC + 0.05 * (2.0 * PI * 0.15 * t + wander_ph).sin() + noise.sample(&mut rng);
    }
    SignalRecord::new(spec.id.clone(), fs, ppg, abp, Source::Synthetic)
        .expect("generator builds equal-length channels")
}

/// Per-subject seed derived from the dataset seed.
pub fn subject_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Writes every subject as `<id>.csv` plus sidecar into `dir`.
pub fn write_dataset(cfg: &SynthConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (k, spec) in cfg.subjects.iter().enumerate() {
        let rec = generate_subject(spec, cfg, subject_seed(seed, k));
        let path = dir.join(format!("{}.csv", spec.id));
        ingest::write_record_with_sidecar(&rec, &path)?;
        out.push(path);
    }
    Ok(out)
}
