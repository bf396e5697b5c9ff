//! Beat detection and per-pulse landmarks.
//!
//! Peaks and valleys come from AMPD. A pulse runs from one diastolic valley to
//! the next and must contain exactly one systolic peak. Within a pulse the
//! dicrotic notch is found with a chord/curvature search and the SDPPG a-e
//! waves from the smoothed second derivative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum FiducialError {
    #[error("signal of {len} samples is too short (need {min})")]
    TooShort { len: usize, min: usize },
    #[error("fewer than two valleys; no complete beat")]
    NoBeats,
    #[error("pulse has no samples between the systolic peak and its end")]
    DegeneratePulse,
    #[error("second derivative shows no a/b wave pair")]
    NoWShape,
    #[error("need at least 5 pulses to smooth fiducials, got {0}")]
    TooFewPulses(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Peaks,
    Valleys,
}

/// Automatic multiscale-based peak detection.
///
/// After removing the least-squares line, a sample is a maximum at scale `k`
/// when it exceeds both neighbours `k` apart. The scale with the most maxima
/// (counting only samples that have both neighbours) bounds the search, and a
/// peak is any interior sample that is a maximum at every scale up to it; a
/// neighbour that falls outside the signal is ignored at that stage, so beats
/// near the ends are not lost.
pub fn ampd_peaks(x: &[f64], polarity: Polarity) -> Result<Vec<usize>, FiducialError> {
    let n = x.len();
    if n < 16 {
        return Err(FiducialError::TooShort { len: n, min: 16 });
    }
    let sign = match polarity {
        Polarity::Peaks => 1.0,
        Polarity::Valleys => -1.0,
    };
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * scale;

    let nf = n as f64;
    let tm = (nf - 1.0) / 2.0;
    let ym = x.iter().sum::<f64>() / nf;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let t = i as f64 - tm;
        sty += t * (v - ym);
        stt += t * t;
    }
    let slope = sty / stt;
    let d: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| sign * (v - ym - slope * (i as f64 - tm)))
        .collect();

    let is_max = |i: usize, k: usize| -> bool {
        (i < k || d[i] > d[i - k] + tol) && (i + k >= n || d[i] > d[i + k] + tol)
    };
    let max_scale = n.div_ceil(2) - 1;
    let mut best_scale = 0;
    let mut best_count = 0usize;
    for k in 1..=max_scale {
        // only samples with both neighbours present vote for the scale
        let count = (k..n - k).filter(|&i| is_max(i, k)).count();
        if count > best_count {
            best_count = count;
            best_scale = k;
        }
    }
    if best_count == 0 {
        return Ok(Vec::new());
    }
    Ok((1..n - 1)
        .filter(|&i| (1..=best_scale).all(|k| is_max(i, k)))
        .collect())
}

/// One beat, valley to valley inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub samples: Vec<f64>,
    /// The same span before preprocessing, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<f64>>,
    /// Start time in seconds from the beginning of the segment.
    pub t0: f64,
    pub fs: f64,
    /// Index of `samples[0]` in the segment.
    pub start: usize,
    /// Systolic peak offset within the pulse.
    pub peak: usize,
}

impl Pulse {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.fs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub pulses: Vec<Pulse>,
    pub peaks: Vec<usize>,
    pub valleys: Vec<usize>,
    /// Valley pairs skipped: zero or several peaks, or a span bridging a gap.
    pub dropped: usize,
}

impl Segmentation {
    /// Median peak-to-peak interval in seconds.
    pub fn rr_median(&self, fs: f64) -> Option<f64> {
        if self.peaks.len() < 2 {
            return None;
        }
        let rr: Vec<f64> = self
            .peaks
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / fs)
            .collect();
        Some(stats::median(&rr))
    }
}

/// Valley pairs wider than this multiple of the median span bridge a missed
/// beat and are dropped even when they hold a single peak.
pub const MAX_SPAN_RATIO: f64 = 1.5;

/// Cuts the signal into valley-to-valley pulses holding exactly one peak.
pub fn segment_pulses(ppg: &[f64], fs: f64) -> Result<Segmentation, FiducialError> {
    let peaks = ampd_peaks(ppg, Polarity::Peaks)?;
    let valleys = ampd_peaks(ppg, Polarity::Valleys)?;
    if valleys.len() < 2 {
        return Err(FiducialError::NoBeats);
    }
    let spans: Vec<f64> = valleys.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let longest = MAX_SPAN_RATIO * stats::median(&spans);
    let mut pulses = Vec::new();
    let mut dropped = 0;
    let mut pi = 0;
    for w in valleys.windows(2) {
        let (a, b) = (w[0], w[1]);
        while pi < peaks.len() && peaks[pi] <= a {
            pi += 1;
        }
        let inside: Vec<usize> = peaks[pi..].iter().copied().take_while(|&p| p < b).collect();
        if inside.len() != 1 || (b - a) as f64 > longest {
            dropped += 1;
            continue;
        }
        pulses.push(Pulse {
            samples: ppg[a..=b].to_vec(),
            raw: None,
            t0: a as f64 / fs,
            fs,
            start: a,
            peak: inside[0] - a,
        });
    }
    Ok(Segmentation {
        pulses,
        peaks,
        valleys,
        dropped,
    })
}

/// Index within a pulse plus the value found there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub index: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Notch {
    pub landmark: Landmark,
    /// Set when the curvature search found nothing resembling a notch.
    pub low_confidence: bool,
}

/// Three-step notch search: chord inflexion, RR/5 window, curvature maximum.
pub fn dicrotic_notch(p: &Pulse, rr_median: f64) -> Result<Notch, FiducialError> {
    let y = &p.samples;
    let end = y.len() - 1;
    let peak = p.peak;
    if peak + 1 >= end {
        return Err(FiducialError::DegeneratePulse);
    }
    let (yp, ye) = (y[peak], y[end]);
    let span = (end - peak) as f64;
    let dev: Vec<f64> = (peak + 1..end)
        .map(|i| y[i] - (yp + (ye - yp) * (i - peak) as f64 / span))
        .collect();
    let range = y.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v))
        - y.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let flat_tol = 1e-9 * range.max(f64::MIN_POSITIVE);
    let inflexion = if dev.iter().all(|d| d.abs() <= flat_tol) {
        (peak + end) / 2
    } else {
        peak + 1 + stats::argmin(&dev).unwrap()
    };

    let radius = (rr_median * p.fs / 5.0).round().max(1.0) as usize;
    let lo = inflexion.saturating_sub(radius).max(peak + 1);
    let hi = (inflexion + radius).min(end - 1);
    let curv: Vec<f64> = (lo..=hi).map(|i| y[i - 1] - 2.0 * y[i] + y[i + 1]).collect();
    let k = stats::argmax(&curv).unwrap();
    let index = lo + k;
    Ok(Notch {
        landmark: Landmark {
            index,
            amplitude: y[index],
        },
        low_confidence: curv[k] <= flat_tol,
    })
}

/// Five-point least-squares derivative; shorter stencils at the ends.
pub fn smooth_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (x[i + 1] - x[i - 1] + 2.0 * (x[i + 2] - x[i - 2])) / (10.0 * dt)
        } else if i >= 1 && i + 1 < n {
            (x[i + 1] - x[i - 1]) / (2.0 * dt)
        } else if i == 0 {
            (x[1] - x[0]) / dt
        } else {
            (x[n - 1] - x[n - 2]) / dt
        };
    }
    d
}

pub fn sdppg(x: &[f64], fs: f64) -> Vec<f64> {
    let dt = 1.0 / fs;
    smooth_derivative(&smooth_derivative(x, dt), dt)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SdppgPoints {
    pub a: Option<Landmark>,
    pub b: Option<Landmark>,
    pub c: Option<Landmark>,
    pub d: Option<Landmark>,
    pub e: Option<Landmark>,
}

impl SdppgPoints {
    pub fn get(&self, name: char) -> Option<Landmark> {
        match name {
            'a' => self.a,
            'b' => self.b,
            'c' => self.c,
            'd' => self.d,
            'e' => self.e,
            _ => None,
        }
    }

    pub fn set(&mut self, name: char, v: Option<Landmark>) {
        match name {
            'a' => self.a = v,
            'b' => self.b = v,
            'c' => self.c = v,
            'd' => self.d = v,
            'e' => self.e = v,
            _ => {}
        }
    }

    /// Present points must be strictly increasing in time.
    pub fn ordered(&self) -> bool {
        let idx: Vec<usize> = "abcde".chars().filter_map(|c| self.get(c)).map(|l| l.index).collect();
        idx.windows(2).all(|w| w[0] < w[1])
    }
}

/// Alternating extrema separated by at least `delta`, starting with a minimum.
fn hysteresis_extrema(s: &[f64], from: usize, delta: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut want_min = true;
    let mut best = from;
    for i in from + 1..s.len() {
        if want_min {
            if s[i] < s[best] {
                best = i;
            } else if s[i] > s[best] + delta {
                out.push(best);
                want_min = false;
                best = i;
            }
        } else if s[i] > s[best] {
            best = i;
        } else if s[i] < s[best] - delta {
            out.push(best);
            want_min = true;
            best = i;
        }
    }
    out
}

/// a: the largest local maximum of the SDPPG between onset and systolic peak.
/// Then alternating extrema with 1% hysteresis: the first minimum is b; of the
/// remaining, max-min-max gives c, d, e, max-min gives c, d and a lone
/// maximum is e.
pub fn sdppg_fiducials(p: &Pulse) -> Result<SdppgPoints, FiducialError> {
    let n = p.samples.len();
    if n < 32 {
        return Err(FiducialError::TooShort { len: n, min: 32 });
    }
    let s = sdppg(&p.samples, p.fs);
    let hi = p.peak.clamp(1, n - 2);
    let local: Vec<usize> = (1..=hi).filter(|&i| s[i] >= s[i - 1] && s[i] > s[i + 1]).collect();
    let a = if local.is_empty() {
        stats::argmax(&s[..=hi]).unwrap()
    } else {
        *local.iter().max_by(|&&i, &&j| s[i].total_cmp(&s[j]).then(j.cmp(&i))).unwrap()
    };
    let range = s.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - s.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let ext = hysteresis_extrema(&s, a, 0.01 * range);
    let lm = |i: usize| Landmark {
        index: i,
        amplitude: s[i],
    };
    let Some(&b) = ext.first() else {
        return Err(FiducialError::NoWShape);
    };
    if !(s[a] > 0.0 && s[b] < 0.0) {
        return Err(FiducialError::NoWShape);
    }
    let mut out = SdppgPoints {
        a: Some(lm(a)),
        b: Some(lm(b)),
        ..Default::default()
    };
    match ext[1..] {
        [c, d, e, ..] => {
            out.c = Some(lm(c));
            out.d = Some(lm(d));
            out.e = Some(lm(e));
        }
        [c, d] => {
            out.c = Some(lm(c));
            out.d = Some(lm(d));
        }
        [e] => out.e = Some(lm(e)),
        [] => {}
    }
    Ok(out)
}

/// Landmarks of one pulse; indices are offsets from the pulse start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFiducials {
    pub valley_start: Landmark,
    pub sys_peak: Landmark,
    pub dicrotic_notch: Landmark,
    pub valley_end: Landmark,
    pub sdppg: SdppgPoints,
    pub rr_median: f64,
    #[serde(default)]
    pub notch_low_confidence: bool,
}

impl PulseFiducials {
    pub fn is_consistent(&self) -> bool {
        let order = self.valley_start.index < self.sys_peak.index
            && self.sys_peak.index < self.dicrotic_notch.index
            && self.dicrotic_notch.index < self.valley_end.index;
        let w = match (self.sdppg.a, self.sdppg.b) {
            (Some(a), Some(b)) => a.amplitude > 0.0 && b.amplitude < 0.0,
            _ => false,
        };
        order && w && self.sdppg.ordered()
    }
}

/// Builds all landmarks for a pulse.
pub fn detect_fiducials(p: &Pulse, rr_median: f64) -> Result<PulseFiducials, FiducialError> {
    let notch = dicrotic_notch(p, rr_median)?;
    let sd = sdppg_fiducials(p)?;
    let end = p.samples.len() - 1;
    Ok(PulseFiducials {
        valley_start: Landmark {
            index: 0,
            amplitude: p.samples[0],
        },
        sys_peak: Landmark {
            index: p.peak,
            amplitude: p.samples[p.peak],
        },
        dicrotic_notch: notch.landmark,
        valley_end: Landmark {
            index: end,
            amplitude: p.samples[end],
        },
        sdppg: sd,
        rr_median,
        notch_low_confidence: notch.low_confidence,
    })
}

/// A pulse together with its landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub pulse: Pulse,
    pub fiducials: PulseFiducials,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothOutcome {
    pub beats: Vec<Beat>,
    /// (beat position in the input, landmark name) of every value re-marked as an outlier.
    pub outliers: Vec<(usize, String)>,
    /// Positions in the input whose landmarks were imputed from neighbours.
    pub imputed: Vec<usize>,
    /// Positions in the input that were removed.
    pub dropped: Vec<usize>,
}

/// Mean taken relative to the first value, so equal inputs come back bit-exact.
fn anchored_mean(x: &[f64]) -> f64 {
    match x.first() {
        Some(&x0) => x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64,
        None => f64::NAN,
    }
}

const TRACKS: [&str; 7] = ["sys_peak", "dicrotic_notch", "a", "b", "c", "d", "e"];

fn track_get(f: &PulseFiducials, name: &str) -> Option<Landmark> {
    match name {
        "sys_peak" => Some(f.sys_peak),
        "dicrotic_notch" => Some(f.dicrotic_notch),
        s => f.sdppg.get(s.chars().next().unwrap()),
    }
}

/// Outlier rejection then a centred five-pulse moving average of every
/// landmark offset and amplitude. A value farther than 3 SD from the mean of
/// its (up to four) neighbours, or a missing one, is replaced by that mean.
/// PPG landmark amplitudes are re-read from the pulse at the smoothed index.
/// Beats that cannot be imputed or end up out of order are dropped.
pub fn smooth_fiducials(beats: &[Beat]) -> Result<SmoothOutcome, FiducialError> {
    let n = beats.len();
    if n < 5 {
        return Err(FiducialError::TooFewPulses(n));
    }
    let mut outliers = Vec::new();
    let mut imputed = Vec::new();
    let mut unusable = vec![false; n];
    // per track: cleaned (offset, amplitude)
    let mut clean: Vec<Vec<Option<(f64, f64)>>> = Vec::with_capacity(TRACKS.len());
    for name in TRACKS {
        let raw: Vec<Option<(f64, f64)>> = beats
            .iter()
            .map(|b| track_get(&b.fiducials, name).map(|l| (l.index as f64, l.amplitude)))
            .collect();
        let mut col = raw.clone();
        for i in 0..n {
            let neigh: Vec<(f64, f64)> = (i.saturating_sub(2)..(i + 3).min(n))
                .filter(|&j| j != i)
                .filter_map(|j| raw[j])
                .collect();
            let ts: Vec<f64> = neigh.iter().map(|v| v.0).collect();
            let amps: Vec<f64> = neigh.iter().map(|v| v.1).collect();
            let mean = (anchored_mean(&ts), anchored_mean(&amps));
            match raw[i] {
                None => {
                    if neigh.is_empty() {
                        unusable[i] = true;
                    } else {
                        col[i] = Some(mean);
                        imputed.push(i);
                    }
                }
                Some((t, a)) if neigh.len() >= 2 => {
                    // one-sample jitter is quantisation, not an outlier
                    let out_t = (t - mean.0).abs() > (3.0 * stats::sample_sd(&ts)).max(1.0);
                    let out_a = (a - mean.1).abs()
                        > (3.0 * stats::sample_sd(&amps)).max(1e-9 * mean.1.abs());
                    if out_t || out_a {
                        col[i] = Some(mean);
                        outliers.push((i, name.to_string()));
                    }
                }
                Some(_) => {}
            }
        }
        clean.push(col);
    }
    imputed.sort_unstable();
    imputed.dedup();

    let mut out = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for i in 0..n {
        if unusable[i] {
            dropped.push(i);
            continue;
        }
        let b = &beats[i];
        let len = b.pulse.samples.len();
        let mut f = b.fiducials.clone();
        for (k, name) in TRACKS.iter().enumerate() {
            let window: Vec<(f64, f64)> = (i.saturating_sub(2)..(i + 3).min(n))
                .filter(|&j| !unusable[j])
                .filter_map(|j| clean[k][j])
                .collect();
            let t = anchored_mean(&window.iter().map(|v| v.0).collect::<Vec<_>>());
            let a = anchored_mean(&window.iter().map(|v| v.1).collect::<Vec<_>>());
            let idx = (t.round().max(0.0) as usize).min(len - 1);
            match *name {
                "sys_peak" => {
                    f.sys_peak = Landmark {
                        index: idx,
                        amplitude: b.pulse.samples[idx],
                    }
                }
                "dicrotic_notch" => {
                    f.dicrotic_notch = Landmark {
                        index: idx,
                        amplitude: b.pulse.samples[idx],
                    }
                }
                s => f.sdppg.set(
                    s.chars().next().unwrap(),
                    Some(Landmark {
                        index: idx,
                        amplitude: a,
                    }),
                ),
            }
        }
        if f.is_consistent() {
            let mut pulse = b.pulse.clone();
            pulse.peak = f.sys_peak.index;
            out.push(Beat { pulse, fiducials: f });
        } else {
            dropped.push(i);
        }
    }
    Ok(SmoothOutcome {
        beats: out,
        outliers,
        imputed,
        dropped,
    })
}
