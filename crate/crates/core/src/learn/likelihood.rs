//! Exhaustive subset selection by a Gaussian classification likelihood,
//! for observation models where the KS reference law does not apply.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::candidates::{recover_w, Candidate, Selection};
use super::wls::{check_enum_dim, fit_gain};
use crate::error::{Error, Result};

pub const MAX_CANDIDATES: usize = 30;
const CHUNK: usize = 4096;

/// Profile log-likelihood of `x ~ N(Ŵᵀh, s²I)` with each sample assigned
/// its best binary `h` and `s²` fitted: `−(nm/2)(ln(2πŝ²) + 1)`.
pub fn profile_loglik(x: &DMatrix<f64>, w_hat: &DMatrix<f64>) -> Result<f64> {
    let (d, m) = w_hat.shape();
    check_enum_dim(d)?;
    if x.nrows() != m {
        return Err(Error::Dimension(format!("Ŵ has {m} columns, X has {} rows", x.nrows())));
    }
    let n = x.ncols();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let g = w_hat * w_hat.transpose();
    let y = w_hat * x;
    let rss: f64 = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = 0.0;
            for j in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let yj = y.column(j).into_owned();
                let best = (0..1usize << d).map(|mask| fit_gain(mask, &yj, &g)).fold(f64::NEG_INFINITY, f64::max);
                s += (x.column(j).norm_squared() - best).max(0.0);
            }
            s
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    let nm = (n * m) as f64;
    let s2 = rss / nm;
    if s2 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-0.5 * nm * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Tries every size-`d` subset, skipping rank-deficient ones, and keeps
/// the one with the largest likelihood (first in lexicographic order on
/// ties). Returns the selection and the chosen indices.
pub fn likelihood_select(cands: &[Candidate], x: &DMatrix<f64>, d: usize) -> Result<(Selection, Vec<usize>)> {
    if cands.len() < d || d == 0 {
        return Err(Error::TooFewCandidates { found: cands.len(), required: d.max(1) });
    }
    if cands.len() > MAX_CANDIDATES {
        return Err(Error::Guard(format!("{} candidates exceed the subset search limit of {MAX_CANDIDATES}", cands.len())));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>)> = None;
    loop {
        let chosen: Vec<Candidate> = idx.iter().map(|&i| cands[i].clone()).collect();
        match recover_w(&chosen) {
            Ok(w) => {
                let ll = profile_loglik(x, &w)?;
                if best.as_ref().is_none_or(|b| ll > b.0) {
                    best = Some((ll, idx.clone(), w));
                }
            }
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
        if !next_combination(&mut idx, cands.len()) {
            break;
        }
    }
    let (_, idx, w_hat) = best.ok_or_else(|| Error::Degenerate("every candidate subset is rank-deficient".into()))?;
    let chosen = idx.iter().map(|&i| cands[i].clone()).collect();
    Ok((Selection { chosen, w_hat }, idx))
}
