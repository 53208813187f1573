//! Comparison estimators: alternating least squares with binary rounding,
//! and the oracle least-squares fit given the true hidden matrix.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::rng;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlsTraceRow {
    pub iteration: usize,
    /// Objective with the previous `W` and the current binary `H`
    /// (`NaN` on the first iteration).
    pub before_w: f64,
    pub after_w: f64,
    pub after_h: f64,
}

#[derive(Debug, Clone)]
pub struct AlsState {
    pub w: DMatrix<f64>,
    pub h_binary: DMatrix<f64>,
    /// `‖X − WᵀH‖²_F` for the final pair.
    pub objective: f64,
    pub iteration: usize,
    pub trace: Vec<AlsTraceRow>,
    /// Number of times rows of `H` were redrawn to restore full rank.
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AlsConfig {
    pub max_iter: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig { max_iter: 500, rel_tol: 1e-9, seed: 0 }
    }
}

/// Least squares `argmin_W ‖X − WᵀH‖²_F = (HHᵀ)⁻¹ H Xᵀ`.
pub fn oracle_ls(x: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != h.ncols() {
        return Err(Error::Dimension(format!("X has {} samples, H has {}", x.ncols(), h.ncols())));
    }
    let gram = h * h.transpose();
    solve_spd(&gram, &(h * x.transpose()), "hidden matrix Gram")
}

/// Entrywise projection onto `{0,1}`: values `≥ 0.5` become 1.
pub fn round_binary(h: &DMatrix<f64>) -> DMatrix<f64> {
    h.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
}

fn objective(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (x - w.transpose() * h).norm_squared()
}

fn random_binary_rows(h: &mut DMatrix<f64>, rows: &[usize], r: &mut rng::Rng) {
    for &i in rows {
        for j in 0..h.ncols() {
            h[(i, j)] = if r.random::<bool>() { 1.0 } else { 0.0 };
        }
    }
}

/// Rows that make `HHᵀ` singular: constant-zero rows and repeats of an
/// earlier row. Falls back to every row when the dependency is subtler.
fn offending_rows(h: &DMatrix<f64>) -> Vec<usize> {
    let d = h.nrows();
    let mut bad = Vec::new();
    for i in 0..d {
        if h.row(i).iter().all(|&v| v == 0.0) || (0..i).any(|k| h.row(k) == h.row(i)) {
            bad.push(i);
        }
    }
    if bad.is_empty() {
        bad = (0..d).collect();
    }
    bad
}

/// ALS from a uniformly random binary starting point.
pub fn als(x: &DMatrix<f64>, d: usize, cfg: &AlsConfig) -> Result<AlsState> {
    if d == 0 || d > x.nrows() {
        return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ m, got d = {d}, m = {}", x.nrows())));
    }
    let mut r = rng::stream(cfg.seed, rng::ALS_INIT, 0);
    let mut h = DMatrix::zeros(d, x.ncols());
    random_binary_rows(&mut h, &(0..d).collect::<Vec<_>>(), &mut r);
    als_from(x, h, cfg)
}

/// ALS from a given binary hidden matrix. Each iteration solves for `W`
/// given `H`, solves for an unconstrained `Ĥ` given `W`, and rounds `Ĥ`.
pub fn als_from(x: &DMatrix<f64>, h0: DMatrix<f64>, cfg: &AlsConfig) -> Result<AlsState> {
    if x.ncols() != h0.ncols() {
        return Err(Error::Dimension(format!("X has {} samples, H has {}", x.ncols(), h0.ncols())));
    }
    let mut r = rng::stream(cfg.seed, rng::ALS_INIT, 1);
    let mut h = h0;
    let mut w: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut restarts = 0;
    let mut prev = f64::INFINITY;
    let mut iteration = 0;
    let mut last_obj = f64::INFINITY;
    while iteration < cfg.max_iter {
        iteration += 1;
        let before_w = w.as_ref().map_or(f64::NAN, |w| objective(x, w, &h));
        let w_new = loop {
            match oracle_ls(x, &h) {
                Ok(w) => break w,
                Err(Error::RankDeficient { .. }) if restarts < 1000 => {
                    restarts += 1;
                    let rows = offending_rows(&h);
                    random_binary_rows(&mut h, &rows, &mut r);
                }
                Err(e) => return Err(e),
            }
        };
        let after_w = objective(x, &w_new, &h);
        let gram = &w_new * w_new.transpose();
        let h_hat = solve_spd(&gram, &(&w_new * x), "weight Gram")?;
        let h_new = round_binary(&h_hat);
        let after_h = objective(x, &w_new, &h_new);
        trace.push(AlsTraceRow { iteration, before_w, after_w, after_h });
        let converged = h_new == h || (prev.is_finite() && (prev - after_h).abs() <= cfg.rel_tol * prev.max(f64::MIN_POSITIVE));
        w = Some(w_new);
        h = h_new;
        last_obj = after_h;
        prev = after_h;
        if converged || after_h == 0.0 {
            break;
        }
    }
    let w = w.ok_or_else(|| Error::InvalidInput("max_iter must be positive".into()))?;
    Ok(AlsState { w, h_binary: h, objective: last_obj, iteration, trace, restarts })
}
