mod common;

use common::{beats_of, pulse_train, FS, PERIOD};
use scsa_bp::features::sdppg_features;
use scsa_bp::fiducials::{detect_fiducials, sdppg_fiducials, Pulse};
use scsa_bp::synth::{beat_shape, beat_waves, canonical_pulse};

fn canonical(sbp: f64) -> Pulse {
    let samples = canonical_pulse(FS, PERIOD, sbp);
    let peak = samples.iter().enumerate().fold(0, |b, (i, v)| if *v > samples[b] { i } else { b });
    Pulse {
        samples,
        raw: None,
        t0: 0.0,
        fs: FS,
        start: 0,
        peak,
    }
}

/// Alternating extrema of the analytic second derivative, on a 10x grid,
/// in sample units. Starts with the first maximum.
fn analytic_sdppg_extrema(sbp: f64) -> Vec<f64> {
    let waves = beat_waves(sbp);
    let n = (PERIOD * FS) as usize * 10;
    let d2: Vec<f64> = (0..=n).map(|i| beat_shape(&waves, i as f64 / n as f64, PERIOD).1).collect();
    let mut out = Vec::new();
    for i in 1..n {
        let is_max = d2[i] > d2[i - 1] && d2[i] >= d2[i + 1];
        let is_min = d2[i] < d2[i - 1] && d2[i] <= d2[i + 1];
        let want_max = out.len() % 2 == 0;
        if (want_max && is_max) || (!want_max && is_min && !out.is_empty()) {
            out.push(i as f64 / 10.0);
        }
    }
    out
}

#[test]
fn canonical_pulse_has_all_five_waves_in_order() {
    for sbp in [100.0, 120.0, 140.0, 160.0] {
        let p = canonical(sbp);
        let pts = sdppg_fiducials(&p).unwrap();
        let idx: Vec<usize> = "abcde".chars().map(|c| pts.get(c).unwrap_or_else(|| panic!("{c} missing at {sbp}")).index).collect();
        assert!(pts.ordered(), "{idx:?}");
        assert!(pts.a.unwrap().amplitude > 0.0 && pts.b.unwrap().amplitude < 0.0);

        let oracle = analytic_sdppg_extrema(sbp);
        assert!(oracle.len() >= 5, "{oracle:?}");
        for (k, (got, want)) in idx.iter().zip(&oracle).enumerate() {
            assert!(
                (*got as f64 - want).abs() <= 2.0,
                "sbp {sbp} wave {k}: detected {got}, analytic {want:.1}"
            );
        }
    }
}

#[test]
fn canonical_sdppg_features_are_finite_and_forward_in_time() {
    let p = canonical(125.0);
    let f = detect_fiducials(&p, PERIOD).unwrap();
    assert!(f.is_consistent());
    let s = sdppg_features(&f, FS).unwrap();
    for v in [s.b_a, s.c_a, s.d_a, s.e_a, s.t_a, s.t_ba, s.t_cb, s.t_dc, s.t_ed, s.ai] {
        assert!(v.is_finite());
    }
    for t in [s.t_ba, s.t_cb, s.t_dc, s.t_ed] {
        assert!(t > 0.0);
    }
    let total = s.t_a + s.t_ba + s.t_cb + s.t_dc + s.t_ed;
    assert!(s.t_a >= 0.0 && total <= p.duration_s());
}

#[test]
fn pulse_train_beats_are_consistent() {
    let wb = beats_of(&pulse_train(13, 120.0));
    assert!((wb.rr_median - PERIOD).abs() < 1.0 / FS, "rr {}", wb.rr_median);
    assert!(wb.beats.len() >= 10, "{} beats", wb.beats.len());
    for b in &wb.beats {
        let f = &b.fiducials;
        assert!(f.is_consistent());
        assert!(f.dicrotic_notch.index > f.sys_peak.index);
        assert!(f.valley_end.index as f64 / FS <= 1.5 * PERIOD);
    }
}
