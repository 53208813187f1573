//! Moment repair for observation noise that is not isotropic Gaussian.
//!
//! When the noise is independent across features, only the diagonal of the
//! second moment and the repeated-index entries of the third moment are
//! biased. The routines here rebuild those entries from the rest.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, pinv_full_rank, singular_values, solve_spd, sym_eigen_desc};
use crate::tensor::{permutations, sorted_triples, SymTensor3};

#[derive(Debug, Clone)]
pub struct DiagonalCompletion {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    /// Largest diagonal change in the last iteration.
    pub delta: f64,
}

/// Alternates between a rank-`d` eigen-reconstruction and resetting the
/// diagonal to that reconstruction's diagonal. Off-diagonal entries are
/// never touched.
pub fn complete_diagonal(m: &DMatrix<f64>, d: usize, max_iter: usize, tol: f64) -> Result<DiagonalCompletion> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(Error::Dimension("matrix must be square".into()));
    }
    if d == 0 || d >= dim {
        return Err(Error::InvalidInput(format!("need 1 ≤ d < m, got d = {d}, m = {dim}")));
    }
    let mut r = m.clone();
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let (vals, vecs) = sym_eigen_desc(&r);
        delta = 0.0;
        for i in 0..dim {
            let new = (0..d).map(|k| vals[k] * vecs[(i, k)] * vecs[(i, k)]).sum::<f64>();
            delta = f64::max(delta, (new - r[(i, i)]).abs());
            r[(i, i)] = new;
        }
        if delta < tol {
            return Ok(DiagonalCompletion { matrix: r, iterations: it, delta });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: delta })
}

fn pairwise_distinct(i: usize, j: usize, k: usize) -> bool {
    i != j && j != k && i != k
}

/// Zeroes every entry with a repeated index.
pub fn mask_offdiag(t: &SymTensor3) -> SymTensor3 {
    SymTensor3::from_sorted_fn(t.dim(), |i, j, k| if pairwise_distinct(i, j, k) { t.get(i, j, k) } else { 0.0 })
}

#[derive(Debug, Clone)]
pub struct MaskedFit {
    pub tensor: SymTensor3,
    pub equations: usize,
    pub unknowns: usize,
    /// Root-mean-square misfit over the kept entries.
    pub residual: f64,
}

/// Least-squares fit of a `d`-dimensional symmetric tensor `S` such that
/// `S(K†, K†, K†)` matches `t_hat` on its pairwise-distinct entries.
pub fn fit_whitened_tensor_masked(t_hat: &SymTensor3, k: &DMatrix<f64>) -> Result<MaskedFit> {
    let m = t_hat.dim();
    if k.nrows() != m {
        return Err(Error::Dimension(format!("K has {} rows, tensor has dimension {m}", k.nrows())));
    }
    let d = k.ncols();
    let kp = pinv_full_rank(k, "whitening matrix")?;
    let unknowns: Vec<(usize, usize, usize)> = sorted_triples(d).collect();
    let eqs: Vec<(usize, usize, usize)> = sorted_triples(m).filter(|&(a, b, c)| pairwise_distinct(a, b, c)).collect();
    if eqs.len() < unknowns.len() {
        return Err(Error::RankDeficient {
            context: "masked tensor system has fewer equations than unknowns".into(),
            rank: eqs.len(),
            required: unknowns.len(),
            smallest: 0.0,
        });
    }
    let perms: Vec<Vec<(usize, usize, usize)>> = unknowns.iter().map(|&(i, j, l)| permutations(i, j, l)).collect();
    let rows: Vec<Vec<f64>> = eqs
        .par_iter()
        .map(|&(a, b, c)| {
            perms
                .iter()
                .map(|ps| ps.iter().map(|&(p, q, r)| kp[(p, a)] * kp[(q, b)] * kp[(r, c)]).sum())
                .collect()
        })
        .collect();
    let u = unknowns.len();
    let design = DMatrix::from_fn(eqs.len(), u, |e, c| rows[e][c]);
    let rhs = DVector::from_iterator(eqs.len(), eqs.iter().map(|&(a, b, c)| t_hat.get(a, b, c)));
    let normal = design.transpose() * &design;
    let coef = solve_spd(&normal, &DMatrix::from_column_slice(u, 1, (design.transpose() * &rhs).as_slice()), "masked tensor design")
        .map_err(|_| {
            let s = singular_values(&design);
            Error::RankDeficient {
                context: "masked tensor design".into(),
                rank: numerical_rank(&design, 1e-10),
                required: u,
                smallest: s.last().copied().unwrap_or(0.0),
            }
        })?;
    let mut tensor = SymTensor3::zeros(d);
    for (c, &(i, j, l)) in unknowns.iter().enumerate() {
        tensor.set_sym(i, j, l, coef[(c, 0)]);
    }
    let fitted = &design * coef.column(0);
    let residual = ((fitted - rhs).norm_squared() / eqs.len() as f64).sqrt();
    Ok(MaskedFit { tensor, equations: eqs.len(), unknowns: u, residual })
}
