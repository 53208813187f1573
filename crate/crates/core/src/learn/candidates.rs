//! Candidate vectors `v = K·u/λ`, exact binary filtering, selection, and
//! pseudo-inverse recovery.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::eigensolver::EigenpairSet;
use crate::error::{Error, Result};
use crate::linalg::pinv_full_rank;
use crate::stability::Eigenpair;

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub v: DVector<f64>,
    pub lambda: f64,
    pub source: Eigenpair,
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub chosen: Vec<Candidate>,
    pub w_hat: DMatrix<f64>,
}

/// Maps every eigenpair with `λ ≥ 1 − lambda_thresh` to `K·u/λ`.
pub fn build_candidates(pairs: &EigenpairSet, k: &DMatrix<f64>, lambda_thresh: f64) -> Result<Vec<Candidate>> {
    if !(lambda_thresh >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_thresh must be ≥ 0, got {lambda_thresh}")));
    }
    let mut out = Vec::new();
    for p in &pairs.pairs {
        if p.u.len() != k.ncols() {
            return Err(Error::Dimension(format!("eigenvector dim {} vs K with {} columns", p.u.len(), k.ncols())));
        }
        if p.lambda > 0.0 && p.lambda >= 1.0 - lambda_thresh {
            out.push(Candidate { v: k * &p.u / p.lambda, lambda: p.lambda, source: p.clone(), score: None });
        }
    }
    Ok(out)
}

/// Largest distance of `vᵀxⱼ` from `{0, 1}` over the sample.
pub fn binary_deviation(v: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    x.tr_mul(v).iter().map(|&p| p.abs().min((p - 1.0).abs())).fold(0.0, f64::max)
}

/// Indices of candidates whose projections are all within `eps_bin` of
/// `{0, 1}`.
pub fn binary_survivors(cands: &[Candidate], x: &DMatrix<f64>, eps_bin: f64) -> Vec<usize> {
    let dev: Vec<f64> = cands.par_iter().map(|c| binary_deviation(&c.v, x)).collect();
    (0..cands.len()).filter(|&i| dev[i] <= eps_bin).collect()
}

/// Keeps candidates whose projections are binary within `eps_bin`, and
/// requires exactly `d` survivors.
pub fn filter_exact(cands: &[Candidate], x: &DMatrix<f64>, d: usize, eps_bin: f64) -> Result<Selection> {
    let chosen: Vec<Candidate> = binary_survivors(cands, x, eps_bin).into_iter().map(|i| cands[i].clone()).collect();
    if chosen.len() != d {
        return Err(Error::SurvivorCount { found: chosen.len(), expected: d });
    }
    let w_hat = recover_w(&chosen)?;
    Ok(Selection { chosen, w_hat })
}

fn lex(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Order used for selection: score ascending, then λ descending, then `v`
/// lexicographically. Unscored candidates sort last.
pub fn selection_order(a: &Candidate, b: &Candidate) -> Ordering {
    let sa = a.score.unwrap_or(f64::INFINITY);
    let sb = b.score.unwrap_or(f64::INFINITY);
    sa.total_cmp(&sb).then(b.lambda.total_cmp(&a.lambda)).then_with(|| lex(&a.v, &b.v))
}

/// Indices of the `d` best candidates under [`selection_order`].
pub fn rank_by_score(cands: &[Candidate], d: usize) -> Result<Vec<usize>> {
    if cands.len() < d {
        return Err(Error::TooFewCandidates { found: cands.len(), required: d });
    }
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&i, &j| selection_order(&cands[i], &cands[j]));
    idx.truncate(d);
    Ok(idx)
}

pub fn select_by_score(cands: &[Candidate], d: usize) -> Result<Selection> {
    let chosen: Vec<Candidate> = rank_by_score(cands, d)?.into_iter().map(|i| cands[i].clone()).collect();
    let w_hat = recover_w(&chosen)?;
    Ok(Selection { chosen, w_hat })
}

/// `[v₁ … v_d]` as an `m×d` matrix.
pub fn stack(vs: &[&DVector<f64>]) -> Result<DMatrix<f64>> {
    let m = vs.first().map(|v| v.len()).ok_or(Error::InvalidInput("no vectors".into()))?;
    if vs.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension("candidate vectors differ in length".into()));
    }
    Ok(DMatrix::from_fn(m, vs.len(), |i, j| vs[j][i]))
}

/// Pseudo-inverse of `[v₁ … v_d]`.
pub fn recover_w(chosen: &[Candidate]) -> Result<DMatrix<f64>> {
    let v = stack(&chosen.iter().map(|c| &c.v).collect::<Vec<_>>())?;
    pinv_full_rank(&v, "selected candidate vectors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::Stability;

    fn cand(v: &[f64], lambda: f64, score: f64) -> Candidate {
        let u = DVector::from_element(1, 1.0);
        Candidate {
            v: DVector::from_column_slice(v),
            lambda,
            source: Eigenpair { u, lambda, stability: Stability::NewtonStable, residual: 0.0 },
            score: Some(score),
        }
    }

    fn pairs(lambdas: &[f64]) -> EigenpairSet {
        EigenpairSet {
            pairs: lambdas
                .iter()
                .map(|&l| Eigenpair { u: DVector::from_column_slice(&[1.0, 0.0]), lambda: l, stability: Stability::NewtonStable, residual: 0.0 })
                .collect(),
            init_count: 1,
            converged_count: lambdas.len(),
        }
    }

    #[test]
    fn threshold_boundaries() {
        let k = DMatrix::identity(3, 2);
        let c = build_candidates(&pairs(&[1.0, 0.5, 0.995]), &k, 0.01).unwrap();
        let ls: Vec<f64> = c.iter().map(|c| c.lambda).collect();
        assert_eq!(ls, vec![1.0, 0.995]);
        let c = build_candidates(&pairs(&[1.0, 0.999]), &k, 0.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].v, DVector::from_column_slice(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn tie_broken_by_lambda_then_vector() {
        let cs = vec![cand(&[1.0, 0.0], 1.2, 0.1), cand(&[0.0, 1.0], 1.5, 0.1), cand(&[0.5, 0.5], 1.5, 0.1)];
        assert_eq!(rank_by_score(&cs, 2).unwrap(), vec![1, 2]);
        let cs = vec![cand(&[1.0, 0.0], 1.0, 0.3), cand(&[0.0, 1.0], 1.0, 0.2)];
        assert_eq!(rank_by_score(&cs, 1).unwrap(), vec![1]);
        assert!(rank_by_score(&cs, 3).is_err());
    }

    #[test]
    fn all_selected_when_exactly_d() {
        let cs = vec![cand(&[1.0, 0.0, 0.0], 1.0, 0.9), cand(&[0.0, 1.0, 0.0], 1.0, 0.1)];
        let sel = select_by_score(&cs, 2).unwrap();
        assert_eq!(sel.chosen.len(), 2);
        assert!((sel.w_hat - DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn recover_identity_and_orthonormal() {
        let cs = vec![cand(&[1.0, 0.0, 0.0, 0.0], 1.0, 0.0), cand(&[0.0, 1.0, 0.0, 0.0], 1.0, 0.0)];
        let w = recover_w(&cs).unwrap();
        assert!((w - DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])).amax() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        let cs = vec![cand(&[s, s, 0.0], 1.0, 0.0), cand(&[s, -s, 0.0], 1.0, 0.0)];
        let w = recover_w(&cs).unwrap();
        let v = stack(&cs.iter().map(|c| &c.v).collect::<Vec<_>>()).unwrap();
        assert!((w - v.transpose()).amax() < 1e-14);
    }

    #[test]
    fn recover_random_is_right_inverse() {
        let mut g = crate::rng::stream(1, 0, 0);
        use rand::Rng;
        let cs: Vec<Candidate> = (0..3).map(|_| cand(&(0..7).map(|_| g.random_range(-1.0..1.0)).collect::<Vec<_>>(), 1.0, 0.0)).collect();
        let w = recover_w(&cs).unwrap();
        let v = stack(&cs.iter().map(|c| &c.v).collect::<Vec<_>>()).unwrap();
        assert!((w * v - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_selection_rejected() {
        let cs = vec![cand(&[1.0, 2.0, 0.0], 1.0, 0.0), cand(&[2.0, 4.0, 0.0], 1.0, 0.0)];
        assert!(matches!(recover_w(&cs), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn exact_filter_on_constructed_data() {
        // W = I₂ padded: columns of W† are e₁, e₂; their sum is not binary on e₁+e₂.
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.5]);
        let x = w.transpose() * &h;
        let wp = pinv_full_rank(&w, "w").unwrap();
        let v1: Vec<f64> = wp.column(0).iter().copied().collect();
        let v2: Vec<f64> = wp.column(1).iter().copied().collect();
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let cs = vec![cand(&v1, 1.0, 0.0), cand(&sum, 1.0, 0.0), cand(&v2, 1.0, 0.0)];
        assert!(binary_deviation(&cs[1].v, &x) > 0.5);
        let sel = filter_exact(&cs, &x, 2, 1e-9).unwrap();
        assert!((sel.w_hat - w).amax() < 1e-12);
        assert!(matches!(filter_exact(&cs[..1], &x, 2, 1e-9), Err(Error::SurvivorCount { found: 1, expected: 2 })));
    }

    #[test]
    fn random_vectors_fail_binarity() {
        use rand::Rng;
        let mut g = crate::rng::stream(2, 0, 0);
        let x = DMatrix::from_fn(5, 50, |_, _| g.random_range(-2.0..2.0));
        for _ in 0..100 {
            let v = DVector::from_fn(5, |_, _| g.random_range(-1.0..1.0));
            assert!(binary_deviation(&v, &x) > 1e-6);
        }
    }
}
