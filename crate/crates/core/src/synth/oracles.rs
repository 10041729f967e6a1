//! Brute-force and closed-form oracles used to verify the optimizers.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::trellis::Trellis;

/// Exhaustive best-path search over all node combinations (one per layer),
/// with the same tie rule as the dynamic program: among maximum-energy paths,
/// the one that is lexicographically smallest read from the last layer
/// backwards. Guarded to at most 10^6 paths.
pub fn oracle_best_path(t: &Trellis) -> Result<(Vec<u32>, f64)> {
    let sizes: Vec<usize> = t.layers().iter().map(Vec::len).collect();
    let mut total: u64 = 1;
    for &s in &sizes {
        total = total
            .checked_mul(s as u64)
            .filter(|&v| v <= 1_000_000)
            .ok_or_else(|| Error::invalid("path count exceeds the 10^6 enumeration guard"))?;
    }
    let f_count = sizes.len();
    let mut idx = vec![0usize; f_count];
    let mut best_idx: Option<Vec<usize>> = None;
    let mut best_energy = f64::NEG_INFINITY;
    loop {
        let mut energy = 0.0;
        for f in 0..f_count {
            energy += t.layers()[f][idx[f]].score;
            if f + 1 < f_count {
                energy += t.lambda_edge() * t.edge(f, idx[f], idx[f + 1]);
            }
        }
        let better = match &best_idx {
            None => true,
            Some(cur) => {
                energy > best_energy
                    || (energy == best_energy && reverse_lex_less(&idx, cur))
            }
        };
        if better {
            best_energy = energy;
            best_idx = Some(idx.clone());
        }
        // odometer increment
        let mut f = f_count;
        loop {
            if f == 0 {
                let best = best_idx.expect("at least one path");
                let path = best
                    .iter()
                    .enumerate()
                    .map(|(layer, &i)| t.layers()[layer][i].proposal_id)
                    .collect();
                return Ok((path, best_energy));
            }
            f -= 1;
            idx[f] += 1;
            if idx[f] < sizes[f] {
                break;
            }
            idx[f] = 0;
        }
    }
}

/// `a < b` comparing the last layer first.
fn reverse_lex_less(a: &[usize], b: &[usize]) -> bool {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        match x.cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Exact minimizer of the total within-segment squared error for a fixed
/// segment count, by dynamic programming over split points. Returns the
/// boundaries (start frames of segments 2..).
pub fn oracle_segmentation(z: &Array2<f64>, num_segments: usize) -> Result<Vec<usize>> {
    let n = z.nrows();
    let k = z.ncols();
    if num_segments == 0 {
        return Err(Error::invalid("need at least one segment"));
    }
    if num_segments > n {
        return Err(Error::invalid(format!(
            "cannot split {n} frames into {num_segments} segments"
        )));
    }
    // prefix sums per column for O(1) segment cost
    let mut sum = vec![vec![0.0; n + 1]; k];
    let mut sum_sq = vec![vec![0.0; n + 1]; k];
    for c in 0..k {
        for r in 0..n {
            sum[c][r + 1] = sum[c][r] + z[(r, c)];
            sum_sq[c][r + 1] = sum_sq[c][r] + z[(r, c)] * z[(r, c)];
        }
    }
    // within-segment squared error of rows [a, b)
    let cost = |a: usize, b: usize| -> f64 {
        let len = (b - a) as f64;
        (0..k)
            .map(|c| {
                let s = sum[c][b] - sum[c][a];
                sum_sq[c][b] - sum_sq[c][a] - s * s / len
            })
            .sum()
    };

    let mut dp = vec![vec![f64::INFINITY; n + 1]; num_segments + 1];
    let mut from = vec![vec![0usize; n + 1]; num_segments + 1];
    dp[0][0] = 0.0;
    for s in 1..=num_segments {
        for end in s..=n {
            for split in s - 1..end {
                if dp[s - 1][split] == f64::INFINITY {
                    continue;
                }
                let v = dp[s - 1][split] + cost(split, end);
                if v < dp[s][end] {
                    dp[s][end] = v;
                    from[s][end] = split;
                }
            }
        }
    }
    let mut boundaries = Vec::with_capacity(num_segments - 1);
    let mut end = n;
    for s in (1..=num_segments).rev() {
        let start = from[s][end];
        if s > 1 {
            boundaries.push(start);
        }
        end = start;
    }
    boundaries.reverse();
    Ok(boundaries)
}

/// Direct linear solve of the walk fixed point `(I - beta P') s = (1 - beta) z`.
pub fn oracle_walk_stationary(p: &Array2<f64>, z: &[f64], beta: f64) -> Result<Vec<f64>> {
    let n = p.nrows();
    if p.ncols() != n || z.len() != n {
        return Err(Error::invalid("dimension mismatch in stationary solve"));
    }
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= beta * p[(j, i)];
        }
    }
    let b = DVector::from_iterator(n, z.iter().map(|&v| (1.0 - beta) * v));
    let solution = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::invalid("singular stationary system"))?;
    Ok(solution.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::{best_path, Trellis, TrellisNode};
    use crate::walk::{random_walk, transition_matrix, FeatureSet};

    fn node(proposal_id: u32, score: f64) -> TrellisNode {
        TrellisNode { proposal_id, score }
    }

    #[test]
    fn oracle_matches_dp_on_worked_examples() {
        let layers = vec![
            vec![node(0, 1.0), node(1, 0.0)],
            vec![node(0, 0.0), node(1, 1.0)],
        ];
        let t = Trellis::new(layers, vec![Array2::zeros((2, 2))], 1.0).unwrap();
        assert_eq!(oracle_best_path(&t).unwrap(), best_path(&t));

        let single = Trellis::new(vec![vec![node(3, 0.7)]], vec![], 1.0).unwrap();
        let (path, energy) = oracle_best_path(&single).unwrap();
        assert_eq!(path, vec![3]);
        assert_eq!(energy, 0.7);
    }

    #[test]
    fn oracle_guards_enumeration_size() {
        let n = 40;
        let layers: Vec<Vec<TrellisNode>> = (0..5)
            .map(|_| (0..n).map(|p| node(p as u32, 0.0)).collect())
            .collect();
        let edges = (0..4).map(|_| Array2::zeros((n, n))).collect();
        let t = Trellis::new(layers, edges, 1.0).unwrap();
        assert!(oracle_best_path(&t).is_err());
    }

    #[test]
    fn segmentation_oracle_on_planted_jump() {
        let mut z = Array2::zeros((30, 2));
        for r in 12..30 {
            z[(r, 0)] = 2.0;
            z[(r, 1)] = -1.0;
        }
        assert!(oracle_segmentation(&z, 1).unwrap().is_empty());
        assert_eq!(oracle_segmentation(&z, 2).unwrap(), vec![12]);
        assert!(oracle_segmentation(&z, 31).is_err());
    }

    #[test]
    fn segmentation_oracle_two_jumps() {
        let mut z = Array2::zeros((30, 1));
        for r in 10..20 {
            z[(r, 0)] = 3.0;
        }
        for r in 20..30 {
            z[(r, 0)] = -2.0;
        }
        assert_eq!(oracle_segmentation(&z, 3).unwrap(), vec![10, 20]);
    }

    #[test]
    fn stationary_solve_matches_iteration() {
        let fs = FeatureSet::new(vec![
            ("a".into(), vec![0.0, 0.0]),
            ("b".into(), vec![0.5, 0.1]),
            ("c".into(), vec![4.0, 4.0]),
        ])
        .unwrap();
        let p = transition_matrix(&fs, 1.0).unwrap();
        let z = vec![1.0 / 3.0; 3];
        let beta = 0.85;
        let iterated = random_walk(&p, &z, beta, 200).unwrap();
        let solved = oracle_walk_stationary(&p, &z, beta).unwrap();
        for (a, b) in iterated.iter().zip(&solved) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn stationary_solve_two_point_algebra() {
        // Uniform 2x2 chain: stationary scores stay uniform.
        let p = Array2::from_elem((2, 2), 0.5);
        let s = oracle_walk_stationary(&p, &[0.5, 0.5], 0.7).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert!((s[1] - 0.5).abs() < 1e-12);
    }
}
