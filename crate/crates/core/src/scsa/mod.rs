//! Semi-classical signal analysis.
//!
//! A nonnegative pulse `y` is taken as the potential of
//! `H = -h^2 d^2/dt^2 - y` and reconstructed from the bound states alone:
//! `y_h = 4h * sum(kappa_n * psi_n^2)` with `kappa_n = sqrt(-lambda_n)`.
//! Smaller `h` (larger `chi = 1/sqrt(h)`) gives more bound states and a finer
//! reconstruction.

pub mod eigen;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum ScsaError {
    #[error("semi-classical parameter must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("potential must be nonnegative (min {0})")]
    NegativePotential(f64),
    #[error("signal of {0} samples is too short (need 8)")]
    TooShort(usize),
    #[error("eigen-solver failed: {0}")]
    EigFailure(#[from] eigen::EigenError),
    #[error("no chi on the grid produced a bound state")]
    GridExhausted,
    #[error("need at least two solitons to split phases, have {0}")]
    TooFewSolitons(usize),
    #[error("invalid chi grid: {0}")]
    InvalidGrid(String),
}

/// Second-derivative discretisation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Fourier pseudospectral matrix on a periodic grid.
    #[default]
    Fourier,
    /// Three-point central difference with zero boundary values.
    CentralDifference,
}

/// Dense row-major second-derivative matrix for `n` points spaced `dt`.
pub fn second_derivative_matrix(n: usize, dt: f64, kind: Discretization) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    match kind {
        Discretization::Fourier => {
            let s = 2.0 * PI / n as f64;
            let scale = (2.0 * PI / (n as f64 * dt)).powi(2);
            let even = n % 2 == 0;
            let diag = if even {
                -PI * PI / (3.0 * s * s) - 1.0 / 6.0
            } else {
                -PI * PI / (3.0 * s * s) + 1.0 / 12.0
            };
            // the matrix is a symmetric circulant: one value per offset
            let col: Vec<f64> = (0..n)
                .map(|m| {
                    if m == 0 {
                        return diag * scale;
                    }
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let half = m as f64 * s / 2.0;
                    let v = if even {
                        -sign / (2.0 * half.sin().powi(2))
                    } else {
                        -sign / (2.0 * half.sin() * half.tan())
                    };
                    v * scale
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    d[i * n + j] = col[(i + n - j) % n];
                }
            }
        }
        Discretization::CentralDifference => {
            let c = 1.0 / (dt * dt);
            for i in 0..n {
                d[i * n + i] = -2.0 * c;
                if i + 1 < n {
                    d[i * n + i + 1] = c;
                    d[(i + 1) * n + i] = c;
                }
            }
        }
    }
    d
}

fn check_potential(y: &[f64]) -> Result<(), ScsaError> {
    if y.len() < 8 {
        return Err(ScsaError::TooShort(y.len()));
    }
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) {
        return Err(ScsaError::NegativePotential(min));
    }
    Ok(())
}

/// `H = -h^2 D2 - diag(y)` as a dense row-major matrix.
pub fn build_operator(
    y: &[f64],
    dt: f64,
    h: f64,
    kind: Discretization,
) -> Result<Vec<f64>, ScsaError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ScsaError::NonPositiveH(h));
    }
    check_potential(y)?;
    let d2 = second_derivative_matrix(y.len(), dt, kind);
    Ok(assemble(&d2, y, h))
}

fn assemble(d2: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let h2 = h * h;
    let mut a: Vec<f64> = d2.iter().map(|v| -h2 * v).collect();
    for i in 0..n {
        a[i * n + i] -= y[i];
    }
    a
}

/// Bound states of the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerSpectrum {
    pub h: f64,
    pub chi: f64,
    /// Descending.
    pub kappas: Vec<f64>,
    /// `psis[n]` is the n-th eigenfunction on the grid, with `sum(psi^2) dt = 1`.
    pub psis: Vec<Vec<f64>>,
    pub n_h: usize,
    pub dt: f64,
    /// The potential the spectrum was computed from.
    pub y: Vec<f64>,
}

/// Negative eigenvalues below `-1e-9 * |H|` and their L2-normalised
/// eigenfunctions, sorted by descending kappa.
pub fn negative_spectrum(
    n: usize,
    h_matrix: Vec<f64>,
    dt: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), ScsaError> {
    let e = eigen::symmetric_eigen_below(n, h_matrix, |vals| {
        let norm = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        -1e-9 * norm
    })?;
    let scale = 1.0 / dt.sqrt();
    // ascending eigenvalues give descending kappa
    let kappas: Vec<f64> = e.values[..e.vectors.len()].iter().map(|l| (-l).sqrt()).collect();
    let psis: Vec<Vec<f64>> = e
        .vectors
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * scale).collect())
        .collect();
    Ok((kappas, psis))
}

/// Builds the operator for `h = 1/chi^2` and extracts its bound states.
pub fn decompose(
    y: &[f64],
    dt: f64,
    chi: f64,
    kind: Discretization,
) -> Result<SchrodingerSpectrum, ScsaError> {
    check_potential(y)?;
    let d2 = second_derivative_matrix(y.len(), dt, kind);
    decompose_with(y, dt, chi, &d2)
}

fn decompose_with(
    y: &[f64],
    dt: f64,
    chi: f64,
    d2: &[f64],
) -> Result<SchrodingerSpectrum, ScsaError> {
    let h = 1.0 / (chi * chi);
    if !(h > 0.0 && h.is_finite()) {
        return Err(ScsaError::NonPositiveH(h));
    }
    let (kappas, psis) = negative_spectrum(y.len(), assemble(d2, y, h), dt)?;
    Ok(SchrodingerSpectrum {
        h,
        chi,
        n_h: kappas.len(),
        kappas,
        psis,
        dt,
        y: y.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub y_h: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub rmse: f64,
    pub spectrum: SchrodingerSpectrum,
}

impl ReconstructionResult {
    /// RMSE relative to the RMS of the input.
    pub fn relative_rmse(&self) -> f64 {
        let r = stats::rms(&self.spectrum.y);
        if r > 0.0 {
            self.rmse / r
        } else {
            0.0
        }
    }
}

/// `4h * sum(kappa * psi^2)` over the given soliton range.
pub fn partial_sum(spec: &SchrodingerSpectrum, range: std::ops::Range<usize>) -> Vec<f64> {
    let n = spec.y.len();
    let mut out = vec![0.0; n];
    for k in range {
        let w = 4.0 * spec.h * spec.kappas[k];
        for (o, p) in out.iter_mut().zip(&spec.psis[k]) {
            *o += w * p * p;
        }
    }
    out
}

pub fn reconstruct(spec: &SchrodingerSpectrum) -> ReconstructionResult {
    if spec.n_h == 0 {
        log::warn!("empty spectrum at chi = {}; reconstruction is zero", spec.chi);
    }
    let y_h = partial_sum(spec, 0..spec.n_h);
    let epsilon: Vec<f64> = spec.y.iter().zip(&y_h).map(|(a, b)| a - b).collect();
    let rmse = stats::rms(&epsilon);
    ReconstructionResult {
        y_h,
        epsilon,
        rmse,
        spectrum: spec.clone(),
    }
}

/// One grid point of an h search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub chi: f64,
    pub h: f64,
    pub n_h: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HSearch {
    pub result: ReconstructionResult,
    pub sweep: Vec<SweepPoint>,
    /// Whether the chosen point meets the bound-state target.
    pub target_met: bool,
}

/// How the chi grid is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiGridConfig {
    /// Fixed lower end; auto-scaled from the pulse when absent.
    pub chi_min: Option<f64>,
    pub chi_max: Option<f64>,
    pub steps: usize,
    pub n_h_target: usize,
    pub discretization: Discretization,
}

impl Default for ChiGridConfig {
    fn default() -> Self {
        ChiGridConfig {
            chi_min: None,
            chi_max: None,
            steps: 30,
            n_h_target: 20,
            discretization: Discretization::Fourier,
        }
    }
}

/// Largest bound-state count requested from the auto-scaled grid, as a
/// fraction of the number of samples; beyond it the grid no longer resolves
/// the eigenfunctions.
pub const MAX_NH_FRACTION: f64 = 0.4;

/// Log-spaced chi values. The automatic range uses the semi-classical
/// count `N_h ~ chi^2 * integral(sqrt(y)) / pi`: it starts where one bound
/// state is expected and stops at twice the target (capped at
/// `MAX_NH_FRACTION` of the grid size).
pub fn chi_grid(y: &[f64], dt: f64, cfg: &ChiGridConfig) -> Result<Vec<f64>, ScsaError> {
    if cfg.steps == 0 {
        return Err(ScsaError::InvalidGrid("zero steps".into()));
    }
    let integral: f64 = y.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() * dt;
    let weyl = |count: f64| (PI * count / integral).sqrt();
    let lo = match cfg.chi_min {
        Some(v) => v,
        None if integral > 0.0 => weyl(1.0),
        None => return Err(ScsaError::GridExhausted),
    };
    let hi = match cfg.chi_max {
        Some(v) => v,
        None if integral > 0.0 => {
            let cap = MAX_NH_FRACTION * y.len() as f64;
            weyl((2.0 * cfg.n_h_target as f64).min(cap).max(1.0))
        }
        None => return Err(ScsaError::GridExhausted),
    };
    log_space(lo, hi.max(lo), cfg.steps)
}

pub fn log_space(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, ScsaError> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(ScsaError::InvalidGrid(format!("{lo} .. {hi}")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..steps)
        .map(|i| (a + (b - a) * i as f64 / (steps - 1) as f64).exp())
        .collect())
}

/// Error-feedback search over a chi grid: reconstruct at every point, then
/// take the smallest RMSE among points reaching `n_h_target` bound states,
/// or the global minimum when none does. Ties go to the smaller chi.
pub fn optimize_h(
    y: &[f64],
    dt: f64,
    grid: &[f64],
    n_h_target: usize,
    kind: Discretization,
) -> Result<HSearch, ScsaError> {
    if grid.is_empty() {
        return Err(ScsaError::InvalidGrid("empty grid".into()));
    }
    if grid.iter().any(|c| !(*c > 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScsaError::InvalidGrid("chi must be positive and ascending".into()));
    }
    check_potential(y)?;
    let d2 = second_derivative_matrix(y.len(), dt, kind);
    let mut results = Vec::with_capacity(grid.len());
    for &chi in grid {
        let spec = decompose_with(y, dt, chi, &d2)?;
        results.push(reconstruct(&spec));
    }
    let sweep: Vec<SweepPoint> = results
        .iter()
        .map(|r| SweepPoint {
            chi: r.spectrum.chi,
            h: r.spectrum.h,
            n_h: r.spectrum.n_h,
            rmse: r.rmse,
        })
        .collect();
    if sweep.iter().all(|p| p.n_h == 0) {
        return Err(ScsaError::GridExhausted);
    }
    let pick = |ok: &dyn Fn(&SweepPoint) -> bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in sweep.iter().enumerate() {
            if ok(p) && best.is_none_or(|b| p.rmse < sweep[b].rmse) {
                best = Some(i);
            }
        }
        best
    };
    let (idx, target_met) = match pick(&|p| p.n_h >= n_h_target) {
        Some(i) => (i, true),
        None => (pick(&|p| p.n_h >= 1).unwrap_or(0), false),
    };
    let result = results.swap_remove(idx);
    Ok(HSearch {
        result,
        sweep,
        target_met,
    })
}

/// Systolic/diastolic partition of the reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplit {
    pub n_s: usize,
    pub p_s: Vec<f64>,
    pub p_d: Vec<f64>,
}

/// The `min(3, N_h/2)` largest solitons form the systolic phase, the rest the
/// diastolic phase.
pub fn split_phases(spec: &SchrodingerSpectrum) -> Result<PhaseSplit, ScsaError> {
    if spec.n_h < 2 {
        return Err(ScsaError::TooFewSolitons(spec.n_h));
    }
    let n_s = systolic_count(spec.n_h);
    Ok(PhaseSplit {
        n_s,
        p_s: partial_sum(spec, 0..n_s),
        p_d: partial_sum(spec, n_s..spec.n_h),
    })
}

pub fn systolic_count(n_h: usize) -> usize {
    3.min(n_h / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech2_grid(n: usize, amp: f64, sigma: f64) -> (Vec<f64>, f64) {
        let dt = 24.0 / n as f64;
        let y = (0..n)
            .map(|i| {
                let t = -12.0 + i as f64 * dt;
                amp / (t / sigma).cosh().powi(2)
            })
            .collect();
        (y, dt)
    }

    #[test]
    fn single_soliton_is_exact() {
        let (y, dt) = sech2_grid(1024, 2.0, 1.0);
        let spec = decompose(&y, dt, 1.0, Discretization::Fourier).unwrap();
        assert_eq!(spec.n_h, 1);
        assert!((spec.kappas[0] - 1.0).abs() < 1e-6);
        let r = reconstruct(&spec);
        let err = r.epsilon.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-6, "{err}");
        let norm: f64 = spec.psis[0].iter().map(|p| p * p).sum::<f64>() * dt;
        assert!((norm - 1.0).abs() < 1e-8);
    }

    #[test]
    fn poschl_teller_three_levels() {
        for n in [1024, 2048] {
            let (y, dt) = sech2_grid(n, 12.0, 1.0);
            let spec = decompose(&y, dt, 1.0, Discretization::Fourier).unwrap();
            assert_eq!(spec.n_h, 3);
            for (k, want) in spec.kappas.iter().zip([3.0, 2.0, 1.0]) {
                assert!((k - want).abs() < 1e-2, "{k}");
            }
        }
    }

    #[test]
    fn kappa_scales_inversely_with_width() {
        for sigma in [0.5, 1.0, 2.0] {
            let (y, dt) = sech2_grid(1024, 12.0 / (sigma * sigma), sigma);
            let spec = decompose(&y, dt, 1.0, Discretization::Fourier).unwrap();
            assert_eq!(spec.n_h, 3);
            for (k, want) in spec.kappas.iter().zip([3.0, 2.0, 1.0]) {
                assert!((k * sigma - want).abs() < 1e-2, "sigma {sigma}: {k}");
            }
        }
    }

    #[test]
    fn free_operator_has_no_bound_states() {
        let y = vec![0.0; 64];
        let a = build_operator(&y, 0.1, 0.7, Discretization::Fourier).unwrap();
        let e = eigen::symmetric_eigen(64, a).unwrap();
        assert!(e.values[0] >= -1e-10);
        let spec = decompose(&y, 0.1, 2.0, Discretization::Fourier).unwrap();
        assert_eq!(spec.n_h, 0);
        let r = reconstruct(&spec);
        assert!(r.y_h.iter().all(|v| *v == 0.0));
        assert_eq!(r.rmse, 0.0);
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let n = 40;
        let free = eigen::symmetric_eigen(
            n,
            build_operator(&vec![0.0; n], 0.05, 0.3, Discretization::Fourier).unwrap(),
        )
        .unwrap();
        let c = 2.5;
        let shifted = eigen::symmetric_eigen(
            n,
            build_operator(&vec![c; n], 0.05, 0.3, Discretization::Fourier).unwrap(),
        )
        .unwrap();
        let scale = free.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (a, b) in free.values.iter().zip(&shifted.values) {
            assert!((a - c - b).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let y: Vec<f64> = (0..33).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        for kind in [Discretization::Fourier, Discretization::CentralDifference] {
            let a = build_operator(&y, 0.01, 0.2, kind).unwrap();
            let n = y.len();
            let max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                for j in 0..n {
                    assert!((a[i * n + j] - a[j * n + i]).abs() <= 1e-12 * max);
                }
            }
        }
    }

    #[test]
    fn fourier_d2_differentiates_trig() {
        for n in [32usize, 33] {
            let dt = 2.0 * PI / n as f64;
            let d = second_derivative_matrix(n, dt, Discretization::Fourier);
            let f: Vec<f64> = (0..n).map(|i| (3.0 * i as f64 * dt).sin()).collect();
            for i in 0..n {
                let v: f64 = (0..n).map(|j| d[i * n + j] * f[j]).sum();
                assert!((v + 9.0 * f[i]).abs() < 1e-9, "{n} {i}");
            }
        }
    }

    #[test]
    fn operator_guards() {
        let y = vec![1.0; 10];
        assert_eq!(
            build_operator(&y, 0.1, 0.0, Discretization::Fourier),
            Err(ScsaError::NonPositiveH(0.0))
        );
        let mut neg = y.clone();
        neg[3] = -0.1;
        assert_eq!(
            build_operator(&neg, 0.1, 1.0, Discretization::Fourier),
            Err(ScsaError::NegativePotential(-0.1))
        );
        assert_eq!(
            build_operator(&y[..5], 0.1, 1.0, Discretization::Fourier),
            Err(ScsaError::TooShort(5))
        );
    }

    #[test]
    fn split_counts() {
        assert_eq!(systolic_count(20), 3);
        assert_eq!(systolic_count(4), 2);
        assert_eq!(systolic_count(2), 1);
    }

    #[test]
    fn single_point_grid_is_returned() {
        let (y, dt) = sech2_grid(256, 12.0, 1.0);
        let s = optimize_h(&y, dt, &[0.8], 20, Discretization::Fourier).unwrap();
        assert_eq!(s.result.spectrum.chi, 0.8);
        assert!(!s.target_met);
    }

    #[test]
    fn flat_zero_signal_exhausts_grid() {
        let y = vec![0.0; 64];
        assert_eq!(
            optimize_h(&y, 0.01, &[1.0, 2.0], 5, Discretization::Fourier).unwrap_err(),
            ScsaError::GridExhausted
        );
    }
}
