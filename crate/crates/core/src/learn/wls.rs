//! One weighted least-squares refinement step over truncated posteriors of
//! the hidden binary vectors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::solve_spd;

pub const MAX_ENUM_DIM: usize = 20;
const CHUNK: usize = 4096;

pub(crate) fn check_enum_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_ENUM_DIM {
        return Err(Error::Guard(format!("enumerating 2^{d} hidden vectors needs 1 ≤ d ≤ {MAX_ENUM_DIM}")));
    }
    Ok(())
}

/// `2hᵀy − hᵀGh` for the binary vector encoded by `mask`; equals
/// `‖x‖² − ‖x − Wᵀh‖²` when `y = Wx` and `G = WWᵀ`.
pub(crate) fn fit_gain(mask: usize, y: &DVector<f64>, g: &DMatrix<f64>) -> f64 {
    let d = y.len();
    let mut s = 0.0;
    for i in (0..d).filter(|i| mask >> i & 1 == 1) {
        s += 2.0 * y[i] - g[(i, i)];
        for j in (0..i).filter(|j| mask >> j & 1 == 1) {
            s -= 2.0 * g[(i, j)];
        }
    }
    s
}

/// Refits `W` given, for every sample, the `k_top` most likely hidden
/// vectors under `x ~ N(Ŵᵀh, σ²I)` with weights renormalized over the kept
/// set.
pub fn wls_refine(x: &DMatrix<f64>, w_hat: &DMatrix<f64>, sigma: f64, k_top: usize) -> Result<DMatrix<f64>> {
    let (d, m) = w_hat.shape();
    check_enum_dim(d)?;
    if x.nrows() != m {
        return Err(Error::Dimension(format!("Ŵ has {m} columns, X has {} rows", x.nrows())));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("refinement needs σ > 0".into()));
    }
    if k_top == 0 {
        return Err(Error::InvalidInput("k_top must be positive".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    let total = 1usize << d;
    let keep = k_top.min(total);
    let g = w_hat * w_hat.transpose();
    let y_all = w_hat * x;
    let scale = 1.0 / (2.0 * sigma * sigma);
    let n = x.ncols();
    let partial: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut a = DMatrix::zeros(d, d);
            let mut b = DMatrix::zeros(d, m);
            let mut ll: Vec<(f64, usize)> = Vec::with_capacity(total);
            for j in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let y = y_all.column(j).into_owned();
                ll.clear();
                ll.extend((0..total).map(|mask| (scale * fit_gain(mask, &y, &g), mask)));
                ll.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)));
                let top = ll[0].0;
                let z: f64 = ll[..keep].iter().map(|p| (p.0 - top).exp()).sum();
                for &(l, mask) in &ll[..keep] {
                    let pi = (l - top).exp() / z;
                    for i in (0..d).filter(|i| mask >> i & 1 == 1) {
                        for k in (0..d).filter(|k| mask >> k & 1 == 1) {
                            a[(i, k)] += pi;
                        }
                        for f in 0..m {
                            b[(i, f)] += pi * x[(f, j)];
                        }
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, m);
    for (pa, pb) in partial {
        a += pa;
        b += pb;
    }
    solve_spd(&a, &b, "weighted hidden-vector Gram")
}
