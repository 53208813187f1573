//! Permutation-aligned error between an estimate and the true weights.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Alignment {
    /// Frobenius norm of `Ŵ[perm] − W`.
    pub error: f64,
    /// `perm[i]` is the row of `Ŵ` matched to row `i` of `W`.
    pub permutation: Vec<usize>,
    pub row_errors: Vec<f64>,
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials). Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based arrays with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Matches rows of `w_hat` to rows of `w_true` under squared Euclidean
/// distance and reports the Frobenius error of the matched difference.
pub fn aligned_error(w_hat: &DMatrix<f64>, w_true: &DMatrix<f64>) -> Result<Alignment> {
    if w_hat.shape() != w_true.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?}, truth is {:?}",
            w_hat.shape(),
            w_true.shape()
        )));
    }
    let d = w_true.nrows();
    let cost = DMatrix::from_fn(d, d, |i, j| (w_true.row(i) - w_hat.row(j)).norm_squared());
    let permutation = min_cost_assignment(&cost);
    let row_errors: Vec<f64> = (0..d).map(|i| cost[(i, permutation[i])].sqrt()).collect();
    let error = row_errors.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok(Alignment { error, permutation, row_errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_and_permuted_rows() {
        let w = crate::datagen::gen_w(4, 7, 1).unwrap();
        assert_eq!(aligned_error(&w, &w).unwrap().error, 0.0);
        let perm = [2, 0, 3, 1];
        let wp = DMatrix::from_fn(4, 7, |i, j| w[(perm[i], j)]);
        let a = aligned_error(&wp, &w).unwrap();
        assert_eq!(a.error, 0.0);
        for i in 0..4 {
            assert_eq!(perm[a.permutation[i]], i);
        }
    }

    #[test]
    fn single_row_perturbation() {
        let w = crate::datagen::gen_w(3, 5, 2).unwrap();
        let mut wh = w.clone();
        wh[(1, 2)] += 0.1;
        let a = aligned_error(&wh, &w).unwrap();
        assert!((a.error - 0.1).abs() < 1e-10);
        assert!((a.row_errors[1] - 0.1).abs() < 1e-10);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut r = crate::rng::stream(4, 80, 0);
        use rand::Rng;
        for n in 1..=6 {
            for _ in 0..10 {
                let c = DMatrix::from_fn(n, n, |_, _| r.random::<f64>());
                let assign = min_cost_assignment(&c);
                let got: f64 = (0..n).map(|i| c[(i, assign[i])]).sum();
                let best = all_permutations(n)
                    .into_iter()
                    .map(|p| (0..n).map(|i| c[(i, p[i])]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                assert!((got - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(aligned_error(&DMatrix::zeros(2, 3), &DMatrix::zeros(3, 3)).is_err());
    }
}
