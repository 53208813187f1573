//! Estimators for `W`: exact recovery from noiseless data, and the
//! split-sample noisy estimator with KS or likelihood selection.

pub mod candidates;
pub mod conditions;
pub mod ks;
pub mod likelihood;
pub mod wls;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub use candidates::{build_candidates, filter_exact, recover_w, select_by_score, Candidate, Selection};
pub use conditions::{check_conditions, ConditionReport, Definiteness};
pub use ks::{gmm2_cdf, ks_score, score_round, Gmm2Params};
pub use likelihood::likelihood_select;
pub use wls::wls_refine;

use crate::denoise::{complete_diagonal, fit_whitened_tensor_masked};
use crate::eigensolver::{enumerate_eigenpairs, EigenpairSet, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::numerical_rank;
use crate::moments::{empirical_moments, noise_correct, whiten, whitened_tensor};
use crate::tensor::SymTensor3;

/// Eigenvalues this far below 1 still count as `λ ≥ 1` in the noiseless
/// path, absorbing rounding in the moments.
const NOISELESS_LAMBDA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ModelEstimate {
    pub w_hat: DMatrix<f64>,
    pub d: usize,
    pub sigma: f64,
    pub lambda_thresh: f64,
    pub eigenpairs: EigenpairSet,
    pub candidates: Vec<Candidate>,
    /// Indices into `candidates`, in selection order.
    pub selected: Vec<usize>,
    pub newton_stable_count: usize,
    /// Sizes of the moment and hold-out halves.
    pub split: Option<(usize, usize)>,
}

impl ModelEstimate {
    pub fn selected_lambdas(&self) -> Vec<f64> {
        self.selected.iter().map(|&i| self.candidates[i].lambda).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct NoiselessConfig {
    /// Latent dimension; the numerical rank of `M̂` when absent.
    pub d: Option<usize>,
    pub solver: SolverConfig,
}

/// Exact recovery from noiseless data.
pub fn algorithm1(x: &DMatrix<f64>, cfg: &NoiselessConfig) -> Result<ModelEstimate> {
    let moms = empirical_moments(x)?;
    let d = match cfg.d {
        Some(d) => d,
        None => numerical_rank(&moms.m, 1e-9),
    };
    if d == 0 {
        return Err(Error::Degenerate("second moment is zero".into()));
    }
    let k = whiten(&moms.m, d)?;
    let t_white = whitened_tensor(&moms.t, &k)?;
    let eigenpairs = enumerate_eigenpairs(&t_white, &cfg.solver)?;
    let candidates = build_candidates(&eigenpairs, &k, NOISELESS_LAMBDA_SLACK)?;
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let eps_bin = 1e-6 * scale;
    let selected = candidates::binary_survivors(&candidates, x, eps_bin);
    if selected.len() != d {
        return Err(Error::SurvivorCount { found: selected.len(), expected: d });
    }
    let chosen: Vec<Candidate> = selected.iter().map(|&i| candidates[i].clone()).collect();
    let w_hat = recover_w(&chosen)?;
    let newton_stable_count = eigenpairs.count_with(|s| s.is_newton_stable());
    Ok(ModelEstimate {
        w_hat,
        d,
        sigma: 0.0,
        lambda_thresh: 0.0,
        eigenpairs,
        candidates,
        selected,
        newton_stable_count,
        split: None,
    })
}

/// How the raw moments are adjusted before whitening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentRepair {
    /// Subtract the isotropic Gaussian noise terms for the given `σ`.
    Gaussian,
    /// Use the raw moments unchanged.
    Raw,
    /// Rebuild the diagonal of `M̂` and fit the whitened tensor from the
    /// pairwise-distinct entries of `T̂`.
    Denoise { max_iter: usize, tol: f64 },
}

impl MomentRepair {
    pub fn denoise() -> Self {
        MomentRepair::Denoise { max_iter: 100_000, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Ks,
    Likelihood,
}

#[derive(Debug, Clone)]
pub struct NoisyConfig {
    pub d: usize,
    pub sigma: f64,
    /// Defaults to `5/√n₁` with `n₁` the size of the moment half.
    pub lambda_thresh: Option<f64>,
    pub solver: SolverConfig,
    pub repair: MomentRepair,
    pub selection: SelectionRule,
}

impl NoisyConfig {
    pub fn new(d: usize, sigma: f64) -> Self {
        NoisyConfig {
            d,
            sigma,
            lambda_thresh: None,
            solver: SolverConfig::default(),
            repair: MomentRepair::Gaussian,
            selection: SelectionRule::Ks,
        }
    }
}

pub fn default_lambda_thresh(n_half: usize) -> f64 {
    5.0 / (n_half.max(1) as f64).sqrt()
}

/// Splits `x` at `⌊n/2⌋`: the first half feeds the moments, the second
/// half the selection.
pub fn split_sample(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples to split, got {n}")));
    }
    let n1 = n / 2;
    Ok((x.columns(0, n1).into_owned(), x.columns(n1, n - n1).into_owned()))
}

/// Whitening matrix and whitened tensor from the moment half.
pub fn whitened_from_sample(x1: &DMatrix<f64>, d: usize, sigma: f64, repair: MomentRepair) -> Result<(DMatrix<f64>, SymTensor3)> {
    let moms = empirical_moments(x1)?;
    match repair {
        MomentRepair::Gaussian | MomentRepair::Raw => {
            let s2 = if repair == MomentRepair::Gaussian { sigma * sigma } else { 0.0 };
            let c = noise_correct(&moms, s2)?;
            let k = whiten(&c.m_sigma, d)?;
            let t = whitened_tensor(&c.t_sigma, &k)?;
            Ok((k, t))
        }
        MomentRepair::Denoise { max_iter, tol } => {
            let r = complete_diagonal(&moms.m, d, max_iter, tol)?;
            let k = whiten(&r.matrix, d)?;
            let t = fit_whitened_tensor_masked(&moms.t, &k)?.tensor;
            Ok((k, t))
        }
    }
}

/// The noisy estimator: moments and eigenpairs from the first half of the
/// sample, candidate selection on the second.
pub fn algorithm2(x: &DMatrix<f64>, cfg: &NoisyConfig) -> Result<ModelEstimate> {
    if cfg.d == 0 || cfg.d > x.nrows() {
        return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ m, got d = {}, m = {}", cfg.d, x.nrows())));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("σ must be ≥ 0, got {}", cfg.sigma)));
    }
    if cfg.selection == SelectionRule::Ks && !(cfg.sigma > 0.0) {
        return Err(Error::InvalidInput("KS selection needs σ > 0".into()));
    }
    let (x1, x2) = split_sample(x)?;
    let (k, t_white) = whitened_from_sample(&x1, cfg.d, cfg.sigma, cfg.repair)?;
    let eigenpairs = enumerate_eigenpairs(&t_white, &cfg.solver)?;
    let lambda_thresh = cfg.lambda_thresh.unwrap_or_else(|| default_lambda_thresh(x1.ncols()));
    let mut candidates = build_candidates(&eigenpairs, &k, lambda_thresh)?;
    let (selected, w_hat) = match cfg.selection {
        SelectionRule::Ks => {
            let scores: Vec<Result<f64>> = candidates.par_iter().map(|c| ks_score(&c.v, c.lambda, &x2, cfg.sigma)).collect();
            for (c, s) in candidates.iter_mut().zip(scores) {
                c.score = Some(s?);
            }
            let selected = candidates::rank_by_score(&candidates, cfg.d)?;
            let chosen: Vec<Candidate> = selected.iter().map(|&i| candidates[i].clone()).collect();
            (selected, recover_w(&chosen)?)
        }
        SelectionRule::Likelihood => {
            let (sel, idx) = likelihood_select(&candidates, &x2, cfg.d)?;
            (idx, sel.w_hat)
        }
    };
    let newton_stable_count = eigenpairs.count_with(|s| s.is_newton_stable());
    Ok(ModelEstimate {
        w_hat,
        d: cfg.d,
        sigma: cfg.sigma,
        lambda_thresh,
        eigenpairs,
        candidates,
        selected,
        newton_stable_count,
        split: Some((x1.ncols(), x2.ncols())),
    })
}
