//! PPG/ABP filtering chain.
//!
//! PPG: Chebyshev-II band-pass (zero phase) -> z-score -> polynomial detrend
//! -> Hampel. ABP: Savitzky-Golay only.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("upper band edge {f_hi} Hz is not below Nyquist for fs = {fs} Hz")]
    NyquistViolation { f_hi: f64, fs: f64 },
    #[error("signal of {len} samples is too short (need more than {min})")]
    SignalTooShort { len: usize, min: usize },
    #[error("window of {window} samples exceeds signal length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window length {0} must be odd and positive")]
    InvalidWindow(usize),
    #[error("frame {frame} must be odd and larger than polynomial order {order}")]
    FrameTooSmall { frame: usize, order: usize },
    #[error("polynomial basis is rank deficient")]
    RankDeficient,
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cheby2Config {
    pub order: usize,
    pub stopband_atten_db: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

impl Default for Cheby2Config {
    fn default() -> Self {
        Cheby2Config {
            order: 4,
            stopband_atten_db: 80.0,
            f_lo_hz: 0.5,
            f_hi_hz: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HampelConfig {
    pub window: usize,
    pub nsigma: f64,
}

impl Default for HampelConfig {
    fn default() -> Self {
        HampelConfig {
            window: 19,
            nsigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SavgolConfig {
    pub order: usize,
    pub frame: usize,
}

impl Default for SavgolConfig {
    fn default() -> Self {
        SavgolConfig { order: 4, frame: 19 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetrendConfig {
    pub order: usize,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        DetrendConfig { order: 9 }
    }
}

/// The `filter.*` config table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub cheby2: Cheby2Config,
    pub hampel: HampelConfig,
    pub savgol: SavgolConfig,
    pub detrend: DetrendConfig,
    /// z-score before the polynomial detrend (text order) or after it.
    pub zscore_before_detrend: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            cheby2: Cheby2Config::default(),
            hampel: HampelConfig::default(),
            savgol: SavgolConfig::default(),
            detrend: DetrendConfig::default(),
            zscore_before_detrend: true,
        }
    }
}

/// One applied stage, recorded for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    Cheby2Bandpass {
        order: usize,
        stopband_atten_db: f64,
        f_lo_hz: f64,
        f_hi_hz: f64,
    },
    Hampel {
        window_len: usize,
        nsigma: f64,
    },
    Savgol {
        poly_order: usize,
        window_len: usize,
    },
    PolynomialDetrend {
        poly_order: usize,
    },
    Zscore,
}

// ---------------------------------------------------------------------------
// IIR design

/// Cascade of biquads, each `[b0, b1, b2, 1, a1, a2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<[f64; 6]>,
}

impl Sos {
    /// Realised filter order (number of poles).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Complex response at frequency `f` (Hz).
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2)
        })
    }

    pub fn gain_db(&self, f: f64, fs: f64) -> f64 {
        20.0 * self.response(f, fs).norm().log10()
    }

    /// Single forward pass (transposed direct form II), optional initial state.
    pub fn filter(&self, x: &[f64], zi: Option<&[[f64; 2]]>) -> Vec<f64> {
        let mut state: Vec<[f64; 2]> = match zi {
            Some(z) => z.to_vec(),
            None => vec![[0.0; 2]; self.sections.len()],
        };
        let mut y = x.to_vec();
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in y.iter_mut() {
                let xi = *v;
                let yi = s[0] * xi + z[0];
                z[0] = s[1] * xi - s[4] * yi + z[1];
                z[1] = s[2] * xi - s[5] * yi;
                *v = yi;
            }
        }
        y
    }

    /// Steady-state initial conditions for a unit step.
    pub fn zi(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        let mut out = Vec::with_capacity(self.sections.len());
        for s in &self.sections {
            let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
            // (I - A^T) zi = b[1:] - a[1:] b0 for the companion form
            let r0 = b1 - a1 * b0;
            let r1 = b2 - a2 * b0;
            let det = (1.0 + a1) + a2;
            let z0 = (r0 + r1) / det;
            let z1 = r1 - a2 * z0;
            out.push([scale * z0, scale * z1]);
            scale *= (b0 + b1 + b2) / (1.0 + a1 + a2);
        }
        out
    }

    /// Forward-backward filtering with odd-extension padding of `padlen`.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Result<Vec<f64>, PreprocessError> {
        let n = x.len();
        if n <= padlen {
            return Err(PreprocessError::SignalTooShort { len: n, min: padlen });
        }
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        for i in (1..=padlen).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=padlen {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let zi = self.zi();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
        let fwd = self.filter(&ext, Some(&scaled(ext[0])));
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        let y0 = rev[0];
        rev = self.filter(&rev, Some(&scaled(y0)));
        rev.reverse();
        Ok(rev[padlen..padlen + n].to_vec())
    }
}

struct Zpk {
    z: Vec<Complex64>,
    p: Vec<Complex64>,
    k: f64,
}

/// Analog Chebyshev-II low-pass prototype with its stopband edge at 1 rad/s.
fn cheb2_prototype(n: usize, rs: f64) -> Zpk {
    let de = 1.0 / (10f64.powf(0.1 * rs) - 1.0).sqrt();
    let mu = (1.0 / de).asinh() / n as f64;
    let nf = n as f64;
    let ms: Vec<f64> = if n % 2 == 1 {
        (0..n)
            .map(|i| -nf + 1.0 + 2.0 * i as f64)
            .filter(|m| *m != 0.0)
            .collect()
    } else {
        (0..n).map(|i| -nf + 1.0 + 2.0 * i as f64).collect()
    };
    let z: Vec<Complex64> = ms
        .iter()
        .map(|m| -(Complex64::i() / (m * PI / (2.0 * nf)).sin()).conj())
        .collect();
    let p: Vec<Complex64> = (0..n)
        .map(|i| {
            let m = -nf + 1.0 + 2.0 * i as f64;
            let q = -Complex64::from_polar(1.0, PI * m / (2.0 * nf));
            Complex64::new(mu.sinh() * q.re, mu.cosh() * q.im).inv()
        })
        .collect();
    let num = p.iter().fold(Complex64::new(1.0, 0.0), |a, v| a * (-v));
    let den = z.iter().fold(Complex64::new(1.0, 0.0), |a, v| a * (-v));
    Zpk { z, p, k: (num / den).re }
}

fn lp2bp(lp: Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = lp.p.len() - lp.z.len();
    let map = |r: &[Complex64]| {
        let mut out = Vec::with_capacity(2 * r.len());
        let half: Vec<Complex64> = r.iter().map(|v| v * (bw / 2.0)).collect();
        for v in &half {
            out.push(v + (v * v - wo * wo).sqrt());
        }
        for v in &half {
            out.push(v - (v * v - wo * wo).sqrt());
        }
        out
    };
    let mut z = map(&lp.z);
    z.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    Zpk {
        z,
        p: map(&lp.p),
        k: lp.k * bw.powi(degree as i32),
    }
}

fn bilinear(a: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = a.p.len() - a.z.len();
    let num = a.z.iter().fold(Complex64::new(1.0, 0.0), |acc, v| acc * (fs2 - v));
    let den = a.p.iter().fold(Complex64::new(1.0, 0.0), |acc, v| acc * (fs2 - v));
    let mut z: Vec<Complex64> = a.z.iter().map(|v| (fs2 + v) / (fs2 - v)).collect();
    z.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));
    Zpk {
        z,
        p: a.p.iter().map(|v| (fs2 + v) / (fs2 - v)).collect(),
        k: a.k * (num / den).re,
    }
}

/// Groups roots into real quadratic factors `[1, c1, c2]`.
fn quadratic_factors(roots: &[Complex64]) -> Vec<[f64; 3]> {
    let tol = 1e-10;
    let mut complex: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > tol).collect();
    let mut reals: Vec<f64> = roots
        .iter()
        .filter(|r| r.im.abs() <= tol)
        .map(|r| r.re)
        .collect();
    // nearest the unit circle first
    complex.sort_by(|a, b| (1.0 - a.norm()).abs().total_cmp(&(1.0 - b.norm()).abs()));
    reals.sort_by(f64::total_cmp);
    let mut out: Vec<[f64; 3]> = complex
        .iter()
        .map(|r| [1.0, -2.0 * r.re, r.norm_sqr()])
        .collect();
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => out.push([1.0, -(a + b), a * b]),
            [a] => out.push([1.0, -a, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

fn zpk_to_sos(d: Zpk) -> Sos {
    let poles = quadratic_factors(&d.p);
    let mut zeros = quadratic_factors(&d.z);
    let mut sections = Vec::with_capacity(poles.len());
    for (i, a) in poles.iter().enumerate() {
        // pair each pole factor with the zero factor whose root radius is closest
        let b = if zeros.is_empty() {
            [1.0, 0.0, 0.0]
        } else {
            let j = (0..zeros.len())
                .min_by(|&x, &y| {
                    (zeros[x][2] - a[2]).abs().total_cmp(&(zeros[y][2] - a[2]).abs())
                })
                .unwrap();
            zeros.remove(j)
        };
        let g = if i == 0 { d.k } else { 1.0 };
        sections.push([g * b[0], g * b[1], g * b[2], 1.0, a[1], a[2]]);
    }
    Sos { sections }
}

/// Digital Chebyshev-II band-pass with its -3 dB points at the configured
/// edges. The analog prototype is rescaled so its half-power frequency sits
/// at 1 rad/s before the band-pass transform.
pub fn design_cheby2_bandpass(cfg: &Cheby2Config, fs: f64) -> Result<Sos, PreprocessError> {
    if cfg.order == 0 || !(cfg.stopband_atten_db > 0.0) {
        return Err(PreprocessError::InvalidSpec(format!("{cfg:?}")));
    }
    if !(cfg.f_lo_hz > 0.0 && cfg.f_lo_hz < cfg.f_hi_hz) {
        return Err(PreprocessError::InvalidSpec(format!(
            "band edges {} .. {} Hz",
            cfg.f_lo_hz, cfg.f_hi_hz
        )));
    }
    if cfg.f_hi_hz >= fs / 2.0 {
        return Err(PreprocessError::NyquistViolation {
            f_hi: cfg.f_hi_hz,
            fs,
        });
    }
    let mut proto = cheb2_prototype(cfg.order, cfg.stopband_atten_db);
    let eps = 1.0 / (10f64.powf(cfg.stopband_atten_db / 10.0) - 1.0).sqrt();
    let os = ((1.0 / eps).acosh() / cfg.order as f64).cosh();
    for v in proto.z.iter_mut().chain(proto.p.iter_mut()) {
        *v *= os;
    }
    proto.k *= os.powi((proto.p.len() - proto.z.len()) as i32);
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (w1, w2) = (warp(cfg.f_lo_hz), warp(cfg.f_hi_hz));
    let analog = lp2bp(proto, (w1 * w2).sqrt(), w2 - w1);
    Ok(zpk_to_sos(bilinear(analog, fs)))
}

/// Zero-phase band-pass: forward-backward filtering, odd-extension padding of
/// three times the realised order.
pub fn cheby2_bandpass_zerophase(
    x: &[f64],
    fs: f64,
    cfg: &Cheby2Config,
) -> Result<Vec<f64>, PreprocessError> {
    let sos = design_cheby2_bandpass(cfg, fs)?;
    sos.filtfilt(x, 3 * sos.order())
}

// ---------------------------------------------------------------------------
// Robust and polynomial filters

fn median_of(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Replaces samples farther than `nsigma * 1.4826 * MAD` from their window
/// median. Windows are truncated at the signal ends.
pub fn hampel_filter(x: &[f64], window: usize, nsigma: f64) -> Result<Vec<f64>, PreprocessError> {
    if window == 0 || window % 2 == 0 {
        return Err(PreprocessError::InvalidWindow(window));
    }
    if x.len() < window {
        return Err(PreprocessError::WindowTooLarge {
            window,
            len: x.len(),
        });
    }
    let k = window / 2;
    let n = x.len();
    let mut out = x.to_vec();
    let mut buf = Vec::with_capacity(window);
    for i in 0..n {
        let lo = i.saturating_sub(k);
        let hi = (i + k + 1).min(n);
        buf.clear();
        buf.extend_from_slice(&x[lo..hi]);
        let med = median_of(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median_of(&mut buf);
        if (x[i] - med).abs() > nsigma * 1.4826 * mad {
            out[i] = med;
        }
    }
    Ok(out)
}

/// Projection matrix of a Savitzky-Golay frame: row `r` holds the weights that
/// evaluate the local least-squares polynomial at frame position `r`.
pub fn savgol_projection(order: usize, frame: usize) -> Result<DMatrix<f64>, PreprocessError> {
    if frame % 2 == 0 || frame <= order {
        return Err(PreprocessError::FrameTooSmall { frame, order });
    }
    let m = (frame / 2) as f64;
    let a = DMatrix::from_fn(frame, order + 1, |r, c| {
        let u = if m > 0.0 { (r as f64 - m) / m } else { 0.0 };
        u.powi(c as i32)
    });
    let q = a.qr().q();
    Ok(&q * q.transpose())
}

/// Centre-tap smoothing coefficients.
pub fn savgol_coeffs(order: usize, frame: usize) -> Result<Vec<f64>, PreprocessError> {
    let p = savgol_projection(order, frame)?;
    Ok(p.row(frame / 2).iter().copied().collect())
}

/// Savitzky-Golay smoothing; the first and last half-frames are evaluated
/// from the polynomial fitted to the first and last full frame.
pub fn savgol_smooth(x: &[f64], order: usize, frame: usize) -> Result<Vec<f64>, PreprocessError> {
    let p = savgol_projection(order, frame)?;
    let n = x.len();
    if n < frame {
        return Err(PreprocessError::WindowTooLarge { window: frame, len: n });
    }
    let h = frame / 2;
    let dot = |row: usize, start: usize| -> f64 {
        (0..frame).map(|j| p[(row, j)] * x[start + j]).sum()
    };
    let mut y = vec![0.0; n];
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = if i < h {
            dot(i, 0)
        } else if i >= n - h {
            dot(frame - (n - i), n - frame)
        } else {
            dot(h, i - h)
        };
    }
    Ok(y)
}

/// Subtracts the least-squares polynomial of degree `order` fitted over time
/// normalised to [-1, 1].
pub fn detrend_polynomial(x: &[f64], order: usize) -> Result<Vec<f64>, PreprocessError> {
    let n = x.len();
    if n <= order {
        return Err(PreprocessError::RankDeficient);
    }
    let a = DMatrix::from_fn(n, order + 1, |r, c| {
        let t = if n > 1 {
            -1.0 + 2.0 * r as f64 / (n - 1) as f64
        } else {
            0.0
        };
        t.powi(c as i32)
    });
    let qr = a.qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    if (0..=order).any(|k| r[(k, k)].abs() <= 1e-10 * r00) {
        return Err(PreprocessError::RankDeficient);
    }
    let q = qr.q();
    let xv = nalgebra::DVector::from_column_slice(x);
    let fit = &q * (q.transpose() * &xv);
    Ok(x.iter().zip(fit.iter()).map(|(a, b)| a - b).collect())
}

/// Zero mean, unit sample SD.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    let m = stats::mean(x);
    let sd = stats::sample_sd(x);
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(sd > 1e-12 * scale) || x.len() < 2 {
        return Err(PreprocessError::ZeroVariance);
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

// ---------------------------------------------------------------------------
// Chains

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSignal {
    pub ppg_clean: Vec<f64>,
    pub abp_smooth: Vec<f64>,
    pub applied: Vec<FilterSpec>,
}

pub fn preprocess_ppg(
    x: &[f64],
    fs: f64,
    cfg: &FilterConfig,
) -> Result<(Vec<f64>, Vec<FilterSpec>), PreprocessError> {
    let c = &cfg.cheby2;
    let mut applied = vec![FilterSpec::Cheby2Bandpass {
        order: c.order,
        stopband_atten_db: c.stopband_atten_db,
        f_lo_hz: c.f_lo_hz,
        f_hi_hz: c.f_hi_hz,
    }];
    let mut y = cheby2_bandpass_zerophase(x, fs, c)?;
    let detrend = FilterSpec::PolynomialDetrend {
        poly_order: cfg.detrend.order,
    };
    if cfg.zscore_before_detrend {
        y = zscore(&y)?;
        y = detrend_polynomial(&y, cfg.detrend.order)?;
        applied.extend([FilterSpec::Zscore, detrend]);
    } else {
        y = detrend_polynomial(&y, cfg.detrend.order)?;
        y = zscore(&y)?;
        applied.extend([detrend, FilterSpec::Zscore]);
    }
    y = hampel_filter(&y, cfg.hampel.window, cfg.hampel.nsigma)?;
    applied.push(FilterSpec::Hampel {
        window_len: cfg.hampel.window,
        nsigma: cfg.hampel.nsigma,
    });
    Ok((y, applied))
}

pub fn preprocess_abp(x: &[f64], cfg: &FilterConfig) -> Result<(Vec<f64>, FilterSpec), PreprocessError> {
    let y = savgol_smooth(x, cfg.savgol.order, cfg.savgol.frame)?;
    Ok((
        y,
        FilterSpec::Savgol {
            poly_order: cfg.savgol.order,
            window_len: cfg.savgol.frame,
        },
    ))
}

pub fn preprocess(
    ppg: &[f64],
    abp: &[f64],
    fs: f64,
    cfg: &FilterConfig,
) -> Result<PreprocessedSignal, PreprocessError> {
    let (ppg_clean, mut applied) = preprocess_ppg(ppg, fs, cfg)?;
    let (abp_smooth, sg) = preprocess_abp(abp, cfg)?;
    applied.push(sg);
    Ok(PreprocessedSignal {
        ppg_clean,
        abp_smooth,
        applied,
    })
}
