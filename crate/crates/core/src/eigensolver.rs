//! Enumeration of tensor eigenpairs from random starts.
//!
//! Two local solvers are provided: the orthogonal Newton correction, which
//! converges quadratically to any Newton-stable eigenpair from a close
//! enough start, and the shifted higher-order power method, whose
//! attractors are the power-stable eigenpairs.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::complement_basis;
use crate::rng;
use crate::stability::{Eigenpair, Stability};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Newton,
    Power,
    Both,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(SolveMode::Newton),
            "power" => Ok(SolveMode::Power),
            "both" => Ok(SolveMode::Both),
            other => Err(Error::InvalidInput(format!("unknown solver mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Random starts; `None` means `100 · 2^d`, capped at 10⁵.
    pub n_init: Option<usize>,
    pub tol: f64,
    /// Newton iteration cap per start.
    pub max_iter: usize,
    /// Power-method iteration cap per start (the power method converges
    /// linearly, so it needs a larger budget).
    pub power_max_iter: usize,
    pub dedup_tol: f64,
    /// Power-method shift. `None` alternates `±(1 + Σ|T_ijk|)` over starts.
    pub shift: Option<f64>,
    pub mode: SolveMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_init: None,
            tol: 1e-10,
            max_iter: 100,
            power_max_iter: 20_000,
            dedup_tol: 1e-4,
            shift: None,
            mode: SolveMode::Newton,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn n_starts(&self, d: usize) -> usize {
        self.n_init
            .unwrap_or_else(|| 100usize.saturating_mul(1usize << d.min(20)).min(100_000))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.dedup_tol > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.n_init == Some(0) || self.max_iter == 0 || self.power_max_iter == 0 {
            return Err(Error::InvalidInput("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a single local solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub pair: Eigenpair,
    /// Correction steps taken.
    pub iterations: usize,
    /// `‖g(u_k)‖` for every iterate, starting with the initial point.
    pub residuals: Vec<f64>,
}

fn check_start(t: &SymTensor3, u0: &DVector<f64>) -> Result<()> {
    if u0.len() != t.dim() {
        return Err(Error::Dimension(format!("tensor dim {} vs start dim {}", t.dim(), u0.len())));
    }
    let norm = u0.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// Orthogonal Newton correction: solve `J_p(u) y = −Pᵀ g(u)` and move to
/// `normalize(u + P y)` until `‖g(u)‖ ≤ tol`.
pub fn oncm_solve(t: &SymTensor3, u0: &DVector<f64>, cfg: &SolverConfig) -> Result<Solution> {
    check_start(t, u0)?;
    let mut u = u0 / u0.norm();
    let mut residuals = Vec::new();
    for iter in 0..=cfg.max_iter {
        let tuu = t.mode_apply_unchecked(&u);
        let lambda = tuu.dot(&u);
        let g = &tuu - &u * lambda;
        let r = g.norm();
        residuals.push(r);
        if !r.is_finite() {
            break;
        }
        if r <= cfg.tol {
            let pair = Eigenpair::from_vector(t, u)?;
            return Ok(Solution { pair, iterations: iter, residuals });
        }
        if iter == cfg.max_iter {
            break;
        }
        let p = complement_basis(&u);
        let mut jac = t.contract_one(&u)? * 2.0;
        for i in 0..u.len() {
            jac[(i, i)] -= lambda;
        }
        // the −3u·T(I,u,u)ᵀ term vanishes under Pᵀ(·)P
        let jp: DMatrix<f64> = p.transpose() * jac * &p;
        let rhs = -(p.transpose() * &g);
        let y = jp.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        if !y.iter().all(|x| x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let step = u + p * y;
        let n = step.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::SingularJacobian);
        }
        u = step / n;
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Automatic shift magnitude `1 + Σ|T_ijk|`.
pub fn default_shift(t: &SymTensor3) -> f64 {
    1.0 + t.abs_sum()
}

/// Shifted power iteration `u ← normalize(T(I,u,u) + αu)`.
///
/// With `α > 0` the attractors are local maxima of `T(u,u,u)` on the
/// sphere (negative-definite projected Jacobian); with `α < 0` local minima.
/// Converged points that are not power-stable are reported as errors.
pub fn power_solve(t: &SymTensor3, u0: &DVector<f64>, shift: f64, cfg: &SolverConfig) -> Result<Solution> {
    check_start(t, u0)?;
    let mut u = u0 / u0.norm();
    let mut residuals = Vec::new();
    for iter in 0..=cfg.power_max_iter {
        let tuu = t.mode_apply_unchecked(&u);
        let lambda = tuu.dot(&u);
        let r = (&tuu - &u * lambda).norm();
        residuals.push(r);
        if !r.is_finite() {
            break;
        }
        if r <= cfg.tol {
            let pair = Eigenpair::from_vector(t, u)?;
            if !pair.stability.is_power_stable() {
                return Err(Error::Degenerate(format!(
                    "power iteration stopped at a {} point",
                    pair.stability.as_str()
                )));
            }
            return Ok(Solution { pair, iterations: iter, residuals });
        }
        if iter == cfg.power_max_iter {
            break;
        }
        let next = tuu + &u * shift;
        let n = next.norm();
        if !(n > 0.0) {
            return Err(Error::Degenerate("zero power-method update".into()));
        }
        u = next / n;
    }
    Err(Error::NonConvergence {
        iterations: cfg.power_max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Greedy power-method decomposition with deflation: repeatedly take the
/// best of `starts` power runs (largest eigenvalue), record it, and subtract
/// `λ u⊗u⊗u`. Returned pairs are re-classified against the original tensor.
pub fn power_deflate(t: &SymTensor3, count: usize, starts: usize, cfg: &SolverConfig) -> Result<Vec<Eigenpair>> {
    let d = t.dim();
    let mut work = t.clone();
    let mut found = Vec::with_capacity(count);
    for round in 0..count {
        let shift = cfg.shift.unwrap_or_else(|| default_shift(&work));
        let best = (0..starts)
            .into_par_iter()
            .filter_map(|s| {
                let u0 = random_unit(d, cfg.seed, (round * starts + s) as u64);
                power_solve(&work, &u0, shift, cfg).ok().map(|sol| sol.pair)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(None::<Eigenpair>, |acc, p| match acc {
                Some(a) if a.lambda >= p.lambda => Some(a),
                _ => Some(p),
            })
            .ok_or(Error::NonConvergence { iterations: cfg.power_max_iter, residual: f64::NAN })?;
        work.sub_rank_one(best.lambda, &best.u);
        found.push(Eigenpair::from_vector(t, best.u)?);
    }
    Ok(found)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenpairSet {
    /// Distinct pairs, sorted by decreasing eigenvalue.
    pub pairs: Vec<Eigenpair>,
    pub init_count: usize,
    pub converged_count: usize,
}

pub(crate) fn random_unit(d: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, rng::EIGEN_STARTS, index);
    loop {
        let v = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Runs every start, keeps converged pairs with residual within tolerance,
/// and merges pairs closer than `dedup_tol` under `u ~ −u`.
pub fn enumerate_eigenpairs(t: &SymTensor3, cfg: &SolverConfig) -> Result<EigenpairSet> {
    cfg.validate()?;
    let d = t.dim();
    let n = cfg.n_starts(d);
    let auto_shift = default_shift(t);
    let per_start: Vec<Vec<Eigenpair>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let u0 = random_unit(d, cfg.seed, s as u64);
            let mut out = Vec::new();
            if matches!(cfg.mode, SolveMode::Newton | SolveMode::Both) {
                if let Ok(sol) = oncm_solve(t, &u0, cfg) {
                    out.push(sol.pair);
                }
            }
            if matches!(cfg.mode, SolveMode::Power | SolveMode::Both) {
                let shift = cfg
                    .shift
                    .unwrap_or(if s % 2 == 0 { auto_shift } else { -auto_shift });
                if let Ok(sol) = power_solve(t, &u0, shift, cfg) {
                    out.push(sol.pair);
                }
            }
            out
        })
        .collect();

    let mut converged = 0;
    let mut pairs: Vec<Eigenpair> = Vec::new();
    for pair in per_start.into_iter().flatten() {
        if !(pair.residual <= cfg.tol) {
            continue;
        }
        converged += 1;
        if pairs.iter().all(|p| p.distance(&pair) >= cfg.dedup_tol) {
            pairs.push(pair);
        }
    }
    pairs.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    Ok(EigenpairSet { pairs, init_count: n * if cfg.mode == SolveMode::Both { 2 } else { 1 }, converged_count: converged })
}

impl EigenpairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count_with(&self, f: impl Fn(Stability) -> bool) -> usize {
        self.pairs.iter().filter(|p| f(p.stability)).count()
    }
}

/// Max `‖T(I,u,u) − λu‖` over a set of pairs.
pub fn max_residual(t: &SymTensor3, pairs: &[Eigenpair]) -> f64 {
    pairs
        .iter()
        .map(|p| (t.mode_apply_unchecked(&p.u) - &p.u * p.lambda).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn diag(a: &[f64]) -> SymTensor3 {
        SymTensor3::from_sorted_fn(a.len(), |i, j, k| if i == j && j == k { a[i] } else { 0.0 })
    }

    fn random_sym(d: usize, seed: u64) -> SymTensor3 {
        let mut r = rng::stream(seed, 93, 0);
        let data = (0..d * d * d).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        SymTensor3::from_vec(d, data).unwrap()
    }

    fn orthogonal_tensor(d: usize, weights: &[f64], seed: u64) -> (SymTensor3, DMatrix<f64>) {
        let mut r = rng::stream(seed, 92, 0);
        let q = DMatrix::from_fn(d, d, |_, _| r.random::<f64>() - 0.5).qr().q();
        (SymTensor3::from_rank_one_sum(weights, &q), q)
    }

    #[test]
    fn newton_from_nearby_start_on_diagonal_tensor() {
        let t = diag(&[2.0, 1.0, 0.5]);
        let mut u0 = DVector::from_vec(vec![1.0, 0.12, -0.1]);
        u0 /= u0.norm();
        let sol = oncm_solve(&t, &u0, &SolverConfig::default()).unwrap();
        assert!((sol.pair.lambda - 2.0).abs() < 1e-12);
        assert!((sol.pair.u[0].abs() - 1.0).abs() < 1e-12);
        assert!(sol.pair.residual <= 1e-10);
    }

    #[test]
    fn newton_fixed_point_takes_no_steps() {
        let t = diag(&[2.0, 1.0, 0.5]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let sol = oncm_solve(&t, &e2, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.pair.lambda, 1.0);
    }

    #[test]
    fn newton_converges_quadratically() {
        let t = random_sym(4, 11);
        let cfg = SolverConfig { tol: 1e-14, ..SolverConfig::default() };
        let mut checked = 0;
        for s in 0..50 {
            let u0 = random_unit(4, 77, s);
            let Ok(sol) = oncm_solve(&t, &u0, &cfg) else { continue };
            let r = &sol.residuals;
            // look at consecutive residuals in the asymptotic regime
            for w in r.windows(2) {
                if w[0] < 1e-3 && w[1] > 1e-13 {
                    assert!(w[1] <= 50.0 * w[0] * w[0], "{} -> {}", w[0], w[1]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn power_on_orthogonal_tensor_finds_a_component() {
        let weights = [2.0, 1.4, 1.1];
        let (t, q) = orthogonal_tensor(3, &weights, 1);
        let u0 = random_unit(3, 5, 0);
        let sol = power_solve(&t, &u0, default_shift(&t), &SolverConfig::default()).unwrap();
        let hit = (0..3).find(|&r| (sol.pair.u.dot(&q.column(r)).abs() - 1.0).abs() < 1e-8);
        let r = hit.expect("converged to a planted component");
        assert!((sol.pair.lambda - weights[r]).abs() < 1e-8);
        assert_eq!(sol.pair.stability, Stability::PowerStableNegative);
    }

    #[test]
    fn power_fixed_point() {
        let t = diag(&[2.0, 1.0]);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let sol = power_solve(&t, &e1, 3.0, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn deflation_recovers_all_orthogonal_components() {
        let weights = [2.0, 1.5, 1.2, 1.05];
        let (t, q) = orthogonal_tensor(4, &weights, 2);
        let pairs = power_deflate(&t, 4, 20, &SolverConfig { tol: 1e-12, ..Default::default() }).unwrap();
        let mut seen = [false; 4];
        for p in &pairs {
            let r = (0..4).find(|&r| (p.u.dot(&q.column(r)).abs() - 1.0).abs() < 1e-8).unwrap();
            assert!((p.lambda - weights[r]).abs() < 1e-8);
            seen[r] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn diagonal_equal_weights_enumeration_closed_form() {
        // a₁ = a₂ = 1: eigenpairs e₁, e₂ (λ = 1) and u ∝ (1,1) with
        // a₁u₁ = a₂u₂ = λ, ‖u‖ = 1 ⇒ u = (1,1)/√2, λ = 1/√2.
        let t = diag(&[1.0, 1.0]);
        let set = enumerate_eigenpairs(&t, &SolverConfig { n_init: Some(200), ..Default::default() }).unwrap();
        assert!(set.len() <= 3);
        let lams: Vec<f64> = set.pairs.iter().map(|p| p.lambda).collect();
        assert_eq!(set.len(), 3, "{lams:?}");
        assert!((lams[0] - 1.0).abs() < 1e-12 && (lams[1] - 1.0).abs() < 1e-12);
        assert!((lams[2] - 0.5f64.sqrt()).abs() < 1e-12);
        let u = &set.pairs[2].u;
        assert!((u[0] - 0.5f64.sqrt()).abs() < 1e-10 && (u[1] - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn rank_one_tensor_pair_found() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let t = SymTensor3::rank_one(&v);
        let set = enumerate_eigenpairs(&t, &SolverConfig { n_init: Some(300), ..Default::default() }).unwrap();
        let vn = &v / v.norm();
        let norm3 = v.norm().powi(3);
        assert!(set
            .pairs
            .iter()
            .any(|p| (p.u.dot(&vn).abs() - 1.0).abs() < 1e-10 && (p.lambda - norm3).abs() < 1e-8));
    }

    #[test]
    fn enumeration_is_deterministic_and_distinct() {
        let t = random_sym(3, 21);
        let cfg = SolverConfig { n_init: Some(400), seed: 9, ..Default::default() };
        let a = enumerate_eigenpairs(&t, &cfg).unwrap();
        let b = enumerate_eigenpairs(&t, &cfg).unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert!(a.len() <= 7);
        for (i, p) in a.pairs.iter().enumerate() {
            assert!(p.residual <= cfg.tol);
            for q in &a.pairs[i + 1..] {
                assert!(p.distance(q) >= cfg.dedup_tol);
            }
        }
        assert!(max_residual(&t, &a.pairs) <= 1e-10);
    }

    #[test]
    fn power_mode_on_orthogonal_tensor() {
        let weights = [2.0, 1.5, 1.25];
        let (t, q) = orthogonal_tensor(3, &weights, 4);
        let cfg = SolverConfig { mode: SolveMode::Power, n_init: Some(60), ..Default::default() };
        let set = enumerate_eigenpairs(&t, &cfg).unwrap();
        for r in 0..3 {
            let col = q.column(r).into_owned();
            assert!(set.pairs.iter().any(|p| (p.u.dot(&col) - 1.0).abs() < 1e-8
                && p.stability == Stability::PowerStableNegative));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let t = diag(&[1.0]);
        let cfg = SolverConfig { tol: 0.0, ..Default::default() };
        assert!(enumerate_eigenpairs(&t, &cfg).is_err());
    }

    #[test]
    fn default_start_count() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.n_starts(3), 800);
        assert_eq!(cfg.n_starts(12), 100_000);
    }
}
