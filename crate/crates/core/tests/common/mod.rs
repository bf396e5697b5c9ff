#![allow(dead_code)]

use scsa_bp::analysis::{detect_beats, WindowBeats};
use scsa_bp::preprocess::{preprocess_ppg, FilterConfig};
use scsa_bp::synth::canonical_pulse;

pub const FS: f64 = 125.0;
pub const PERIOD: f64 = 0.8;

/// `beats` copies of the canonical pulse laid end to end on a unit baseline.
pub fn pulse_train(beats: usize, sbp: f64) -> Vec<f64> {
    let one = canonical_pulse(FS, PERIOD, sbp);
    let period = one.len() - 1;
    let mut x = vec![0.0f64; beats * period + 1];
    for b in 0..beats {
        for (i, v) in one.iter().enumerate() {
            x[b * period + i] = x[b * period + i].max(*v);
        }
    }
    x.iter().map(|v| v + 1.0).collect()
}

pub fn beats_of(raw: &[f64]) -> WindowBeats {
    let (clean, _) = preprocess_ppg(raw, FS, &FilterConfig::default()).unwrap();
    detect_beats("t", &clean, raw, FS).unwrap()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
