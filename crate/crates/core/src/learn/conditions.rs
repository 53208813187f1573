//! Non-degeneracy diagnostics for an explicit binary latent distribution.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use rand::Rng as _;
use serde::Serialize;

use crate::linalg::{complement_basis, numerical_rank, singular_values, sym_eigen_desc};
use crate::moments::{BinaryDistribution, LatentMoments};
use crate::rng;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Positive,
    Negative,
    Indefinite,
    Singular,
}

impl Definiteness {
    pub fn of(a: &DMatrix<f64>) -> Self {
        if a.nrows() == 0 {
            return Definiteness::Negative;
        }
        let (vals, _) = sym_eigen_desc(a);
        let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        if vals.iter().any(|v| v.abs() <= tol) {
            Definiteness::Singular
        } else if vals.iter().all(|&v| v > 0.0) {
            Definiteness::Positive
        } else if vals.iter().all(|&v| v < 0.0) {
            Definiteness::Negative
        } else {
            Definiteness::Indefinite
        }
    }

    pub fn is_definite(self) -> bool {
        matches!(self, Definiteness::Positive | Definiteness::Negative)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub d: usize,
    pub sigma_rank: usize,
    /// `rank(2Ω(I,I,eᵢ) − Σ)` for each unit.
    pub unit_ranks: Vec<usize>,
    /// Smallest singular value of each `2Ω(I,I,eᵢ) − Σ`.
    pub unit_min_singular: Vec<f64>,
    /// Definiteness of the tangent-space matrices governing power-method
    /// stability of each true eigenpair, in a whitened frame.
    pub power_definiteness: Vec<Definiteness>,
    /// `r(eᵢ)`, zero for every binary distribution.
    pub rigidity_units: Vec<f64>,
    /// Smallest `r(u)` over the random probes.
    pub rigidity_probe_min: f64,
    pub probes: usize,
}

impl ConditionReport {
    pub fn sigma_full_rank(&self) -> bool {
        self.sigma_rank == self.d
    }

    pub fn units_full_rank(&self) -> bool {
        self.unit_ranks.iter().all(|&r| r == self.d)
    }

    pub fn power_condition(&self) -> bool {
        self.sigma_full_rank() && self.power_definiteness.iter().all(|p| p.is_definite())
    }

    pub fn rigidity_ok(&self) -> bool {
        self.rigidity_units.iter().all(|&r| r == 0.0) && self.rigidity_probe_min > 0.0
    }

    pub fn all_ok(&self) -> bool {
        self.sigma_full_rank() && self.units_full_rank() && self.rigidity_ok()
    }
}

/// `r(u) = E_h[min_b (uᵀh − b)²]`.
pub fn expected_rounding(dist: &BinaryDistribution, u: &DVector<f64>) -> f64 {
    dist.atoms()
        .iter()
        .map(|(h, p)| {
            let s: f64 = h.iter().zip(u.iter()).map(|(&hi, ui)| hi as f64 * ui).sum();
            p * s.powi(2).min((s - 1.0).powi(2))
        })
        .sum()
}

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[i] = 1.0;
    e
}

pub fn check_conditions(lm: &LatentMoments, dist: &BinaryDistribution, probes: usize, seed: u64) -> ConditionReport {
    let d = lm.phi.len();
    let sigma_rank = numerical_rank(&lm.sigma, RANK_TOL);
    let shifted: Vec<DMatrix<f64>> = (0..d)
        .map(|i| lm.omega.contract_one(&unit(d, i)).expect("dimension checked") * 2.0 - &lm.sigma)
        .collect();
    let unit_ranks = shifted.iter().map(|a| numerical_rank(a, RANK_TOL)).collect();
    let unit_min_singular = shifted.iter().map(|a| singular_values(a).last().copied().unwrap_or(0.0)).collect();

    // Whitening B = Σ^{-1/2}; the true eigenvectors are u ∝ B⁻¹eᵢ.
    let power_definiteness = if sigma_rank == d {
        let (vals, vecs) = sym_eigen_desc(&lm.sigma);
        let root = |p: f64| DMatrix::from_diagonal(&DVector::from_iterator(d, vals.iter().map(|v| v.powf(p))));
        let b = &vecs * root(-0.5) * vecs.transpose();
        let b_inv = &vecs * root(0.5) * vecs.transpose();
        (0..d)
            .map(|i| {
                let u = b_inv.column(i).normalize();
                let bp = &b * complement_basis(&u);
                Definiteness::of(&(bp.transpose() * &shifted[i] * &bp))
            })
            .collect()
    } else {
        vec![Definiteness::Singular; d]
    };

    let rigidity_units = (0..d).map(|i| expected_rounding(dist, &unit(d, i))).collect();
    let mut r = rng::stream(seed, rng::PROBES, 0);
    let rigidity_probe_min = (0..probes)
        .map(|_| expected_rounding(dist, &DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal))))
        .fold(f64::INFINITY, f64::min);
    ConditionReport { d, sigma_rank, unit_ranks, unit_min_singular, power_definiteness, rigidity_units, rigidity_probe_min, probes }
}
