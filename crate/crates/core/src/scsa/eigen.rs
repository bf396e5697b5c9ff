//! Dense symmetric eigen-solver.
//!
//! Householder reduction to tridiagonal form, implicit QL for the full set of
//! eigenvalues, then inverse iteration on the tridiagonal matrix for only the
//! eigenvectors that are asked for. SCSA needs every eigenvalue (to count the
//! negative ones) but only the bound-state vectors, which are a fraction of
//! the grid.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EigenError {
    #[error("QL iteration did not converge for eigenvalue {0}")]
    NoConvergence(usize),
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Symmetric tridiagonal form `Q^T A Q = T` with the reflectors that build `Q`.
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl Tridiagonal {
    /// Reduces a row-major symmetric matrix; only the lower triangle is read.
    pub fn reduce(n: usize, mut a: Vec<f64>) -> Tridiagonal {
        debug_assert_eq!(a.len(), n * n);
        for i in 0..n {
            for j in 0..i {
                a[j * n + i] = a[i * n + j];
            }
        }
        let mut off = vec![0.0; n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let m = n - k - 1;
            let mut v: Vec<f64> = (k + 1..n).map(|i| a[i * n + k]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                off[k] = 0.0;
                reflectors.push((v, 0.0));
                continue;
            }
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            off[k] = alpha;
            if beta == 0.0 {
                reflectors.push((v, 0.0));
                continue;
            }
            // p = beta * A22 v; A22 is kept in full so every inner loop is a
            // contiguous axpy
            let o = k + 1;
            let pm = &mut p[..m];
            pm.fill(0.0);
            for (i, &vi) in v.iter().enumerate() {
                let row = &a[(o + i) * n + o..(o + i) * n + o + m];
                for (pj, aij) in pm.iter_mut().zip(row) {
                    *pj += aij * vi;
                }
            }
            let pv: f64 = pm.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() * beta;
            let c = 0.5 * beta * pv;
            for (pi, vi) in pm.iter_mut().zip(&v) {
                *pi = beta * *pi - c * vi;
            }
            for (i, (&vi, &wi)) in v.iter().zip(pm.iter()).enumerate() {
                let row = &mut a[(o + i) * n + o..(o + i) * n + o + m];
                for ((x, pj), vj) in row.iter_mut().zip(pm.iter()).zip(&v) {
                    *x -= vi * pj + wi * vj;
                }
            }
            reflectors.push((v, beta));
        }
        if n >= 2 {
            off[n - 2] = a[(n - 1) * n + (n - 2)];
        }
        let diag = (0..n).map(|i| a[i * n + i]).collect();
        Tridiagonal {
            diag,
            off,
            reflectors,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let r = if i + 1 < n { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + l + r
            })
            .fold(0.0, f64::max)
    }

    /// All eigenvalues in ascending order (implicit QL with Wilkinson shifts).
    pub fn eigenvalues(&self) -> Result<Vec<f64>, EigenError> {
        let n = self.len();
        let mut d = self.diag.clone();
        let mut e = vec![0.0; n];
        e[..n.saturating_sub(1)].copy_from_slice(&self.off);
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 60 {
                    return Err(EigenError::NoConvergence(l));
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = pythag(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut i = m;
                let mut underflow = false;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = pythag(f, g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if underflow {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        d.sort_by(f64::total_cmp);
        Ok(d)
    }

    /// Eigenvectors of `T` for the given ascending eigenvalues by inverse
    /// iteration; vectors of close eigenvalues are orthogonalised against
    /// each other.
    pub fn tridiagonal_vectors(&self, lambdas: &[f64]) -> Vec<Vec<f64>> {
        let n = self.len();
        let tnorm = self.norm_bound().max(f64::MIN_POSITIVE);
        let sep = 10.0 * f64::EPSILON * tnorm;
        let cluster_gap = 1e-3 * tnorm;
        let pivot_floor = f64::EPSILON * tnorm;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
        let mut shifted_prev = f64::NEG_INFINITY;
        let mut cluster_start = 0;
        for (j, &lam0) in lambdas.iter().enumerate() {
            if j > 0 && (lam0 - lambdas[j - 1]).abs() > cluster_gap {
                cluster_start = j;
            }
            let mut lam = lam0;
            if j > 0 && lam - shifted_prev < sep {
                lam = shifted_prev + sep;
            }
            shifted_prev = lam;
            let lu = TriLu::factor(&self.diag, &self.off, lam, pivot_floor);
            // deterministic, non-degenerate start vector
            let mut x: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.5 * (((i * 7 + j * 13) % 17) as f64 / 17.0 - 0.5))
                .collect();
            // with an eigenvalue accurate to rounding, each solve amplifies the
            // wanted component by roughly gap / (eps * |T|); three are plenty
            for _ in 0..3 {
                normalise(&mut x);
                let mut y = lu.solve(&x);
                for prev in &out[cluster_start..j] {
                    let dot: f64 = prev.iter().zip(&y).map(|(a, b)| a * b).sum();
                    for (yi, pi) in y.iter_mut().zip(prev) {
                        *yi -= dot * pi;
                    }
                }
                x = y;
            }
            normalise(&mut x);
            out.push(x);
        }
        out
    }

    /// Applies `Q` to a tridiagonal-basis vector.
    pub fn back_transform(&self, x: &mut [f64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let tail = &mut x[k + 1..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }
}

/// `sqrt(a^2 + b^2)` without the cost of `hypot` unless the squares overflow.
fn pythag(a: f64, b: f64) -> f64 {
    let r = (a * a + b * b).sqrt();
    if r.is_finite() {
        r
    } else {
        a.hypot(b)
    }
}

fn normalise(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}

/// LU of `T - lambda I` with partial pivoting (upper bandwidth two).
struct TriLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swap: Vec<bool>,
}

impl TriLu {
    fn factor(d: &[f64], e: &[f64], lambda: f64, floor: f64) -> TriLu {
        let n = d.len();
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut swap = vec![false; n];
        // current row being eliminated: (diag, super)
        let mut a = d[0] - lambda;
        let mut b = if n > 1 { e[0] } else { 0.0 };
        for i in 0..n.saturating_sub(1) {
            let sub = e[i];
            let next_d = d[i + 1] - lambda;
            let next_e = if i + 2 < n { e[i + 1] } else { 0.0 };
            if a.abs() >= sub.abs() {
                let piv = if a == 0.0 { floor } else { a };
                let m = sub / piv;
                u0[i] = piv;
                u1[i] = b;
                u2[i] = 0.0;
                l[i] = m;
                a = next_d - m * b;
                b = next_e;
            } else {
                let m = a / sub;
                u0[i] = sub;
                u1[i] = next_d;
                u2[i] = next_e;
                l[i] = m;
                swap[i] = true;
                a = b - m * next_d;
                b = -m * next_e;
            }
        }
        u0[n - 1] = if a == 0.0 {
            floor
        } else if a.abs() < floor {
            floor.copysign(a)
        } else {
            a
        };
        TriLu { u0, u1, u2, l, swap }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.l[i] * y[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

/// Result of a partial symmetric eigen-decomposition.
pub struct PartialEigen {
    /// Every eigenvalue, ascending.
    pub values: Vec<f64>,
    /// Eigenvectors for `values[..vectors.len()]`, unit 2-norm, sign fixed so
    /// the largest-magnitude entry is positive.
    pub vectors: Vec<Vec<f64>>,
}

/// Eigen-decomposition of a row-major symmetric matrix, with eigenvectors for
/// the eigenvalues strictly below `cutoff`.
pub fn symmetric_eigen_below(
    n: usize,
    a: Vec<f64>,
    cutoff: impl Fn(&[f64]) -> f64,
) -> Result<PartialEigen, EigenError> {
    if a.len() != n * n {
        return Err(EigenError::NotSquare {
            rows: n,
            cols: a.len() / n.max(1),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    if n == 0 {
        return Ok(PartialEigen {
            values: vec![],
            vectors: vec![],
        });
    }
    let t = Tridiagonal::reduce(n, a);
    let values = t.eigenvalues()?;
    let c = cutoff(&values);
    let k = values.iter().take_while(|&&v| v < c).count();
    let mut vectors = t.tridiagonal_vectors(&values[..k]);
    for v in vectors.iter_mut() {
        t.back_transform(v);
        normalise(v);
        fix_sign(v);
    }
    Ok(PartialEigen { values, vectors })
}

/// Full decomposition (all vectors).
pub fn symmetric_eigen(n: usize, a: Vec<f64>) -> Result<PartialEigen, EigenError> {
    symmetric_eigen_below(n, a, |_| f64::INFINITY)
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}
