//! Eigenpairs of symmetric tensors: the residual map `g`, its projected
//! Jacobian, and Newton/power stability classification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complement_basis, singular_values};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// Projected Jacobian negative definite: an attractor of the power
    /// method with a positive shift (local maximum of `T(u,u,u)` on the sphere).
    PowerStableNegative,
    /// Projected Jacobian positive definite.
    PowerStablePositive,
    /// Projected Jacobian nonsingular but indefinite.
    NewtonStable,
    Unstable,
}

impl Stability {
    pub fn is_newton_stable(self) -> bool {
        !matches!(self, Stability::Unstable)
    }

    pub fn is_power_stable(self) -> bool {
        matches!(self, Stability::PowerStableNegative | Stability::PowerStablePositive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::PowerStableNegative => "power_stable_negative",
            Stability::PowerStablePositive => "power_stable_positive",
            Stability::NewtonStable => "newton_stable",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub u: DVector<f64>,
    pub lambda: f64,
    pub stability: Stability,
    /// Final `‖g(u)‖`.
    pub residual: f64,
}

const UNIT_TOL: f64 = 1e-8;

fn check_unit(t: &SymTensor3, u: &DVector<f64>) -> Result<()> {
    if u.len() != t.dim() {
        return Err(Error::Dimension(format!("tensor dim {} vs vector dim {}", t.dim(), u.len())));
    }
    let norm = u.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// `g(u) = T(I,u,u) − T(u,u,u)·u`; zero exactly at eigenvectors.
pub fn residual_g(t: &SymTensor3, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_unit(t, u)?;
    Ok(residual_unchecked(t, u))
}

pub(crate) fn residual_unchecked(t: &SymTensor3, u: &DVector<f64>) -> DVector<f64> {
    let tu = t.mode_apply_unchecked(u);
    let lambda = tu.dot(u);
    tu - u * lambda
}

/// Full Jacobian `∇g(u) = 2T(I,I,u) − 3u·T(I,u,u)ᵀ − T(u,u,u)·I`.
pub fn jacobian(t: &SymTensor3, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = t.dim();
    let tuu = t.mode_apply(u)?;
    let lambda = tuu.dot(u);
    let mut jac = t.contract_one(u)? * 2.0;
    jac -= u * tuu.transpose() * 3.0;
    for i in 0..d {
        jac[(i, i)] -= lambda;
    }
    Ok(jac)
}

/// `Pᵀ ∇g(u) P` for an explicit orthonormal basis `P` of `u^⊥`.
pub fn projected_jacobian_in(t: &SymTensor3, u: &DVector<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_unit(t, u)?;
    if basis.nrows() != t.dim() || basis.ncols() + 1 != t.dim() {
        return Err(Error::Dimension(format!(
            "basis is {}x{}, expected {}x{}",
            basis.nrows(),
            basis.ncols(),
            t.dim(),
            t.dim().saturating_sub(1)
        )));
    }
    Ok(basis.transpose() * jacobian(t, u)? * basis)
}

/// Projected Jacobian in the Householder basis of `u^⊥`.
pub fn projected_jacobian(t: &SymTensor3, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_unit(t, u)?;
    projected_jacobian_in(t, u, &complement_basis(u))
}

/// Classifies a projected Jacobian. The rank tolerance is
/// `1e-8 · max(σ_max, 1)`.
pub fn classify_matrix(jp: &DMatrix<f64>) -> Stability {
    if jp.nrows() == 0 {
        // d = 1: the tangent space is trivial and every condition holds vacuously.
        return Stability::PowerStableNegative;
    }
    let s = singular_values(jp);
    let tol = 1e-8 * s[0].max(1.0);
    if s.iter().any(|&x| x <= tol) {
        return Stability::Unstable;
    }
    let sym = (jp + jp.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    if eig.iter().all(|&x| x < -tol) {
        Stability::PowerStableNegative
    } else if eig.iter().all(|&x| x > tol) {
        Stability::PowerStablePositive
    } else {
        Stability::NewtonStable
    }
}

pub fn classify(t: &SymTensor3, u: &DVector<f64>) -> Result<Stability> {
    Ok(classify_matrix(&projected_jacobian(t, u)?))
}

/// Identifies `(u, λ)` with `(−u, −λ)`: flips to `λ ≥ 0`, and for `λ ≈ 0`
/// makes the first nonzero coordinate of `u` positive.
pub fn canonicalize(u: &mut DVector<f64>, lambda: &mut f64, zero_tol: f64) {
    let flip = if lambda.abs() <= zero_tol {
        u.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0)
    } else {
        *lambda < 0.0
    };
    if flip {
        *u = -u.clone();
        *lambda = -*lambda;
    }
    if lambda.abs() <= zero_tol {
        *lambda = lambda.abs();
    }
}

impl Eigenpair {
    /// Builds a canonicalized, classified eigenpair from a unit vector.
    pub fn from_vector(t: &SymTensor3, u: DVector<f64>) -> Result<Eigenpair> {
        check_unit(t, &u)?;
        let mut u = &u / u.norm();
        let mut lambda = t.value(&u)?;
        canonicalize(&mut u, &mut lambda, 1e-14 * t.frobenius().max(1.0));
        let residual = residual_unchecked(t, &u).norm();
        let stability = classify(t, &u)?;
        Ok(Eigenpair { u, lambda, stability, residual })
    }

    /// `min(‖u − u'‖, ‖u + u'‖)`.
    pub fn distance(&self, other: &Eigenpair) -> f64 {
        (&self.u - &other.u).norm().min((&self.u + &other.u).norm())
    }
}
