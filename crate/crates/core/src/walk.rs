//! Random-walk consistency scoring over feature vectors.
//!
//! A fully connected similarity graph is built from pairwise Euclidean
//! distances with transition probabilities `p(i,j) proportional to
//! exp(-alpha * d(i,j))`, normalized per row (self included). A damped walk
//! from a uniform prior concentrates mass on dense clusters; items with the
//! lowest stationary scores are removed as outliers.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Items with uniform-dimension feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(items: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::invalid(format!(
                "feature set needs at least 2 items, got {}",
                items.len()
            )));
        }
        let dim = items[0].1.len();
        if dim == 0 {
            return Err(Error::invalid("feature vectors must be non-empty"));
        }
        for (id, psi) in &items {
            if psi.len() != dim {
                return Err(Error::invalid(format!(
                    "item `{id}` has dimension {}, expected {dim}",
                    psi.len()
                )));
            }
            if psi.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("item `{id}` has non-finite features")));
            }
        }
        let (ids, features) = items.into_iter().unzip();
        Ok(Self { ids, features })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }
}

/// Walk parameters. `alpha = None` selects the median heuristic.
#[derive(Debug, Clone, Copy)]
pub struct WalkParams {
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub keep_fraction: f64,
    /// Whether the self term enters the row normalization. Off by default
    /// for filtering: with the median-heuristic bandwidth a far outlier's
    /// self term dominates its row and the walk can no longer drain score
    /// away from it.
    pub include_self: bool,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: 0.85,
            iterations: 100,
            keep_fraction: 0.8,
            include_self: false,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::invalid("walk alpha must be positive"));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("walk beta must lie in (0, 1)"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("walk needs at least one iteration"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid("keep fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Kernel bandwidth `1 / median(pairwise distance)`; falls back to 1 when the
/// median distance is zero.
pub fn median_heuristic_alpha(fs: &FeatureSet) -> f64 {
    let n = fs.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(distance(&fs.features[i], &fs.features[j]));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median > 0.0 {
        1.0 / median
    } else {
        1.0
    }
}

/// Row-stochastic transition matrix `p(i,j) = exp(-alpha d_ij) / sum_m
/// exp(-alpha d_im)`, the self term included in the sum.
pub fn transition_matrix(fs: &FeatureSet, alpha: f64) -> Result<Array2<f64>> {
    transition_matrix_opts(fs, alpha, true)
}

/// [`transition_matrix`] with the self term optionally excluded from the
/// normalization (the diagonal is then zero).
pub fn transition_matrix_opts(fs: &FeatureSet, alpha: f64, include_self: bool) -> Result<Array2<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let n = fs.len();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if !include_self && i == j {
                continue;
            }
            let w = (-alpha * distance(&fs.features[i], &fs.features[j])).exp();
            p[(i, j)] = w;
            row_sum += w;
        }
        if row_sum <= 0.0 {
            return Err(Error::invalid(format!(
                "row {i} of the transition matrix has zero mass"
            )));
        }
        for j in 0..n {
            p[(i, j)] /= row_sum;
        }
    }
    Ok(p)
}

/// Damped walk `s_k = beta * P' s_{k-1} + (1 - beta) * z` from `s_0 = z` for
/// the given iteration count, with an early stop once the update falls below
/// 1e-10 in the max norm.
pub fn random_walk(p: &Array2<f64>, z: &[f64], beta: f64, iterations: usize) -> Result<Vec<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::invalid("transition matrix must be square"));
    }
    if z.len() != n {
        return Err(Error::invalid(format!(
            "prior has {} entries for {n} items",
            z.len()
        )));
    }
    if z.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("prior must be non-negative"));
    }
    let sum: f64 = z.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("prior must sum to 1, got {sum}")));
    }
    let mut s = z.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..iterations {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += s[i] * p[(i, j)];
            }
            next[j] = beta * acc + (1.0 - beta) * z[j];
        }
        let delta = s
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut s, &mut next);
        if delta <= 1e-10 {
            break;
        }
    }
    Ok(s)
}

/// Outcome of [`filter_outliers`]: ids partitioned by the score cut, plus the
/// per-item scores in input order.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    pub scores: Vec<f64>,
}

/// Scores all items with the damped walk from a uniform prior and keeps the
/// top `keep_fraction` (at least one; score ties break toward the smaller
/// id). Kept and removed lists preserve input order.
pub fn filter_outliers(fs: &FeatureSet, params: &WalkParams) -> Result<FilterOutcome> {
    params.validate()?;
    let n = fs.len();
    let alpha = params.alpha.unwrap_or_else(|| median_heuristic_alpha(fs));
    let p = transition_matrix_opts(fs, alpha, params.include_self)?;
    let z = vec![1.0 / n as f64; n];
    let scores = random_walk(&p, &z, params.beta, params.iterations)?;

    let keep_count = ((params.keep_fraction * n as f64).round() as usize)
        .max(1)
        .min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| fs.ids[i].cmp(&fs.ids[j]))
    });
    let mut keep_mask = vec![false; n];
    for &i in order.iter().take(keep_count) {
        keep_mask[i] = true;
    }
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for (i, id) in fs.ids.iter().enumerate() {
        if keep_mask[i] {
            kept.push(id.clone());
        } else {
            removed.push(id.clone());
        }
    }
    Ok(FilterOutcome {
        kept,
        removed,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature_set(features: Vec<Vec<f64>>) -> FeatureSet {
        let items = features
            .into_iter()
            .enumerate()
            .map(|(i, f)| (format!("item{i:03}"), f))
            .collect();
        FeatureSet::new(items).unwrap()
    }

    #[test]
    fn identical_features_give_uniform_rows() {
        let fs = feature_set(vec![vec![1.0, 2.0]; 4]);
        let p = transition_matrix(&fs, 0.7).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((p[(i, j)] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_point_transition_formula() {
        let fs = feature_set(vec![vec![0.0], vec![2.0]]);
        let alpha = 0.9;
        let p = transition_matrix(&fs, alpha).unwrap();
        let w = (-alpha * 2.0f64).exp();
        assert!((p[(0, 1)] - w / (1.0 + w)).abs() < 1e-15);
        assert!((p[(0, 0)] - 1.0 / (1.0 + w)).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        let fs = feature_set(vec![
            vec![0.0, 1.0],
            vec![2.0, -1.0],
            vec![0.5, 0.5],
            vec![10.0, 3.0],
        ]);
        for &include_self in &[true, false] {
            let p = transition_matrix_opts(&fs, 1.3, include_self).unwrap();
            for i in 0..4 {
                let s: f64 = (0..4).map(|j| p[(i, j)]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_walk_is_a_fixed_point() {
        let fs = feature_set(vec![vec![3.0]; 5]);
        let p = transition_matrix(&fs, 1.0).unwrap();
        let z = vec![0.2; 5];
        let s = random_walk(&p, &z, 0.85, 50).unwrap();
        for v in s {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn two_iteration_hand_check() {
        // n = 2, hand-rolled matrix: s_k = beta P's_{k-1} + (1-beta) z.
        let fs = feature_set(vec![vec![0.0], vec![1.0]]);
        let alpha = 1.0;
        let p = transition_matrix(&fs, alpha).unwrap();
        let beta = 0.5;
        let z = [0.5, 0.5];

        let step = |s: [f64; 2]| {
            [
                beta * (s[0] * p[(0, 0)] + s[1] * p[(1, 0)]) + (1.0 - beta) * z[0],
                beta * (s[0] * p[(0, 1)] + s[1] * p[(1, 1)]) + (1.0 - beta) * z[1],
            ]
        };
        let expected = step(step([0.5, 0.5]));
        let s = random_walk(&p, &z, beta, 2).unwrap();
        assert!((s[0] - expected[0]).abs() < 1e-15);
        assert!((s[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn scores_stay_on_simplex() {
        let fs = feature_set(vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.2],
            vec![5.0, 5.0],
        ]);
        let p = transition_matrix(&fs, 1.0).unwrap();
        let z = vec![0.25; 4];
        let s = random_walk(&p, &z, 0.85, 200).unwrap();
        assert!(s.iter().all(|&v| v >= 0.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn keep_fraction_counts() {
        let fs = feature_set(vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0]]);
        let params = WalkParams {
            keep_fraction: 0.5,
            ..Default::default()
        };
        let out = filter_outliers(&fs, &params).unwrap();
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.removed.len(), 2);
        assert!(out.removed.contains(&"item003".to_string()));

        let all = filter_outliers(
            &fs,
            &WalkParams {
                keep_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(all.removed.is_empty());
    }

    #[test]
    fn identical_features_remove_nothing_at_full_fraction() {
        let fs = feature_set(vec![vec![1.0, 1.0]; 6]);
        let out = filter_outliers(
            &fs,
            &WalkParams {
                keep_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.kept.len(), 6);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(FeatureSet::new(vec![("a".into(), vec![1.0])]).is_err());
        assert!(FeatureSet::new(vec![
            ("a".into(), vec![1.0]),
            ("b".into(), vec![1.0, 2.0])
        ])
        .is_err());
        assert!(FeatureSet::new(vec![
            ("a".into(), vec![f64::NAN]),
            ("b".into(), vec![1.0])
        ])
        .is_err());

        let fs = feature_set(vec![vec![0.0], vec![1.0]]);
        let p = transition_matrix(&fs, 1.0).unwrap();
        assert!(random_walk(&p, &[0.5], 0.85, 10).is_err());
        assert!(random_walk(&p, &[0.9, 0.9], 0.85, 10).is_err());
        assert!(transition_matrix(&fs, 0.0).is_err());
    }
}
