//! Least-squares gradient-boosted regression trees on histogram bins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressionError;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    pub min_samples_leaf: usize,
    pub n_trees: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            max_depth: 6,
            learning_rate: 0.05,
            l2_leaf_reg: 1.0,
            min_samples_leaf: 5,
            n_trees: 200,
            subsample: 0.8,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub params: GbtParams,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    /// `base_score + lr * sum(tree outputs)`.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * s
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }

    /// Total split gain per feature.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, gain, .. } = n {
                    imp[*feature] += gain;
                }
            }
        }
        imp
    }
}

/// Per-feature bin edges: a value `x` falls in bin `#{edges < x}`, so
/// `bin <= b` is the same test as `x <= edges[b]`.
struct Binned {
    edges: Vec<Vec<f64>>,
    /// Row-major bin indices, `d` per row.
    bins: Vec<u16>,
    d: usize,
    /// Histogram slots per feature.
    stride: usize,
}

impl Binned {
    fn new(x: &[Vec<f64>], max_bins: usize) -> Binned {
        let n = x.len();
        let d = x[0].len();
        let mut edges = Vec::with_capacity(d);
        let mut bins = vec![0u16; n * d];
        for j in 0..d {
            let mut col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let max = col[n - 1];
            let mut e: Vec<f64> = (1..max_bins)
                .map(|q| col[q * n / max_bins])
                .filter(|&v| v < max)
                .collect();
            e.dedup();
            for (i, r) in x.iter().enumerate() {
                bins[i * d + j] = e.partition_point(|&edge| edge < r[j]) as u16;
            }
            edges.push(e);
        }
        let stride = edges.iter().map(|e| e.len() + 1).max().unwrap_or(1);
        Binned { edges, bins, d, stride }
    }

    fn bin(&self, row: usize, feature: usize) -> usize {
        self.bins[row * self.d + feature] as usize
    }
}

/// Residual sums and counts per (feature, bin).
#[derive(Clone)]
struct Hist {
    g: Vec<f64>,
    n: Vec<u32>,
}

impl Hist {
    fn build(binned: &Binned, rows: &[usize], resid: &[f64]) -> Hist {
        let len = binned.d * binned.stride;
        let mut h = Hist {
            g: vec![0.0; len],
            n: vec![0; len],
        };
        for &i in rows {
            let r = &binned.bins[i * binned.d..(i + 1) * binned.d];
            let gi = resid[i];
            for (j, &b) in r.iter().enumerate() {
                let k = j * binned.stride + b as usize;
                h.g[k] += gi;
                h.n[k] += 1;
            }
        }
        h
    }

    /// `self - other`, for the sibling of a child whose histogram is known.
    fn minus(mut self, other: &Hist) -> Hist {
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a -= b;
        }
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a -= b;
        }
        self
    }
}

struct Best {
    feature: usize,
    bin: usize,
    gain: f64,
}

fn score(g: f64, n: f64, lambda: f64) -> f64 {
    g * g / (n + lambda)
}

fn best_split(binned: &Binned, hist: &Hist, n: usize, g_total: f64, p: &GbtParams) -> Option<Best> {
    let parent = score(g_total, n as f64, p.l2_leaf_reg);
    let mut best: Option<Best> = None;
    for j in 0..binned.d {
        let nb = binned.edges[j].len() + 1;
        if nb < 2 {
            continue;
        }
        let base = j * binned.stride;
        let (mut gl, mut nl) = (0.0, 0usize);
        for b in 0..nb - 1 {
            gl += hist.g[base + b];
            nl += hist.n[base + b] as usize;
            let nr = n - nl;
            if nl < p.min_samples_leaf {
                continue;
            }
            if nr < p.min_samples_leaf {
                break;
            }
            let gain = score(gl, nl as f64, p.l2_leaf_reg)
                + score(g_total - gl, nr as f64, p.l2_leaf_reg)
                - parent;
            if gain > 1e-12 && best.as_ref().is_none_or(|bb| gain > bb.gain) {
                best = Some(Best {
                    feature: j,
                    bin: b,
                    gain,
                });
            }
        }
    }
    best
}

fn leaf_value(rows: &[usize], resid: &[f64], lambda: f64) -> f64 {
    let g: f64 = rows.iter().map(|&i| resid[i]).sum();
    g / (rows.len() as f64 + lambda)
}

/// Grows one tree level by level on the sampled rows.
fn grow_tree(binned: &Binned, rows: Vec<usize>, resid: &[f64], p: &GbtParams) -> Tree {
    let can_split = |depth: usize, n: usize| depth < p.max_depth && n >= 2 * p.min_samples_leaf.max(1);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let root_hist = can_split(0, rows.len()).then(|| Hist::build(binned, &rows, resid));
    let mut frontier = vec![(0usize, rows, root_hist)];
    for depth in 0..=p.max_depth {
        let mut next = Vec::new();
        for (id, rows, hist) in frontier {
            let split = hist.as_ref().and_then(|h| {
                let g: f64 = rows.iter().map(|&i| resid[i]).sum();
                best_split(binned, h, rows.len(), g, p)
            });
            let Some(b) = split else {
                nodes[id] = Node::Leaf {
                    value: leaf_value(&rows, resid, p.l2_leaf_reg),
                };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| binned.bin(i, b.feature) <= b.bin);
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[id] = Node::Split {
                feature: b.feature,
                threshold: binned.edges[b.feature][b.bin],
                left,
                right: left + 1,
                gain: b.gain,
            };
            let (hl, hr) = match (can_split(depth + 1, l.len()), can_split(depth + 1, r.len()), hist) {
                (false, false, _) | (_, _, None) => (None, None),
                (true, false, _) => (Some(Hist::build(binned, &l, resid)), None),
                (false, true, _) => (None, Some(Hist::build(binned, &r, resid))),
                (true, true, Some(h)) => {
                    if l.len() <= r.len() {
                        let hl = Hist::build(binned, &l, resid);
                        let hr = h.minus(&hl);
                        (Some(hl), Some(hr))
                    } else {
                        let hr = Hist::build(binned, &r, resid);
                        let hl = h.minus(&hr);
                        (Some(hl), Some(hr))
                    }
                }
            };
            next.push((left, l, hl));
            next.push((left + 1, r, hr));
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Tree { nodes }
}

fn check_matrix(x: &[Vec<f64>], y: &[f64]) -> Result<usize, RegressionError> {
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let d = x.first().map_or(0, |r| r.len());
    if x.iter().any(|r| r.len() != d) {
        return Err(RegressionError::Ragged);
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    Ok(d)
}

/// Fits the model. A constant target gives a tree-less model that returns
/// the constant exactly.
pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], params: &GbtParams, seed: u64) -> Result<GbtModel, RegressionError> {
    let d = check_matrix(x, y)?;
    let need = (2 * params.min_samples_leaf).max(2);
    if x.len() < need {
        return Err(RegressionError::TooFewRows {
            need,
            have: x.len(),
        });
    }
    if !(params.learning_rate > 0.0) || !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(RegressionError::InvalidParams(format!("{params:?}")));
    }
    let n = x.len();
    let y0 = y[0];
    let base_score = y0 + y.iter().map(|v| v - y0).sum::<f64>() / n as f64;
    let mut model = GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        n_features: d,
        params: *params,
        trees: Vec::new(),
    };
    if y.iter().all(|&v| v == y0) {
        model.base_score = y0;
        return Ok(model);
    }
    let binned = Binned::new(x, params.max_bins.clamp(2, u16::MAX as usize));
    let mut pred = vec![base_score; n];
    let mut resid = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_trees {
        for i in 0..n {
            resid[i] = y[i] - pred[i];
        }
        let rows = if take == n {
            perm.clone()
        } else {
            // partial Fisher-Yates
            for k in 0..take {
                let j = rng.gen_range(k..n);
                perm.swap(k, j);
            }
            let mut r = perm[..take].to_vec();
            r.sort_unstable();
            r
        };
        let tree = grow_tree(&binned, rows, &resid, params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(&x[i]);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Training RMSE, for diagnostics.
pub fn train_rmse(model: &GbtModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let e: Vec<f64> = model.predict(x).iter().zip(y).map(|(p, t)| p - t).collect();
    stats::rms(&e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_target_is_exact() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let y = vec![5.0; 50];
        let m = fit_gbt(&x, &y, &GbtParams::default(), 1).unwrap();
        assert!(m.trees.is_empty());
        assert!(m.predict(&x).iter().all(|&p| p == 5.0));
        assert_eq!(m.predict_row(&[1e9, -3.0]), 5.0);
    }

    #[test]
    fn fits_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..3).map(|_| nrm.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let p = GbtParams {
            max_depth: 6,
            n_trees: 200,
            learning_rate: 0.1,
            l2_leaf_reg: 1.0,
            min_samples_leaf: 1,
            subsample: 1.0,
            max_bins: 255,
        };
        let m = fit_gbt(&x, &y, &p, 3).unwrap();
        let rmse = train_rmse(&m, &x, &y);
        assert!(rmse < 0.05 * stats::sample_sd(&y), "{rmse}");
    }

    #[test]
    fn column_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + (3.0 * r[2]).sin()).collect();
        let perm = [2, 0, 3, 1];
        let xp: Vec<Vec<f64>> = x.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let p = GbtParams {
            n_trees: 50,
            ..GbtParams::default()
        };
        let a = fit_gbt(&x, &y, &p, 5).unwrap();
        let b = fit_gbt(&xp, &y, &p, 5).unwrap();
        assert_eq!(a.predict(&x), b.predict(&xp));
        let ia = a.gain_importance();
        let ib = b.gain_importance();
        for (k, &j) in perm.iter().enumerate() {
            assert_eq!(ib[k], ia[j]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 10.0).collect();
        let p = GbtParams {
            n_trees: 30,
            ..GbtParams::default()
        };
        assert_eq!(fit_gbt(&x, &y, &p, 7).unwrap(), fit_gbt(&x, &y, &p, 7).unwrap());
    }

    #[test]
    fn guards() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_gbt(&x, &[1.0], &GbtParams::default(), 0),
            Err(RegressionError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_gbt(&x, &[1.0, 2.0], &GbtParams::default(), 0),
            Err(RegressionError::TooFewRows { .. })
        ));
        let bad = vec![vec![f64::NAN]; 20];
        assert_eq!(
            fit_gbt(&bad, &[0.0; 20], &GbtParams::default(), 0),
            Err(RegressionError::NonFinite)
        );
    }
}
