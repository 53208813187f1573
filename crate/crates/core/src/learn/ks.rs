//! Kolmogorov-Smirnov scoring of candidate projections against the
//! two-component mixture `(1 − p)·N(0, s²) + p·N(1, s²)`.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Mixture with components at 0 and 1 sharing variance `var`; `p_one` is
/// the weight of the component at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gmm2Params {
    pub p_one: f64,
    pub var: f64,
}

impl Gmm2Params {
    /// Parameters implied by a candidate: `p = 1/λ²` (clamped to `[0,1]`)
    /// and `var = σ²‖v‖²`.
    pub fn for_candidate(v: &DVector<f64>, lambda: f64, sigma: f64) -> Self {
        let p = (1.0 / (lambda * lambda)).clamp(0.0, 1.0);
        Gmm2Params { p_one: p, var: sigma * sigma * v.norm_squared() }
    }

    pub fn weight_zero(&self) -> f64 {
        1.0 - self.p_one
    }
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn gmm2_cdf(t: f64, g: &Gmm2Params) -> Result<f64> {
    if !(g.var > 0.0) {
        return Err(Error::InvalidInput(format!("mixture variance must be positive, got {}", g.var)));
    }
    let s = g.var.sqrt();
    Ok(g.weight_zero() * phi(t / s) + g.p_one * phi((t - 1.0) / s))
}

/// `sup_t |F̂(t) − G(t)|` for the empirical CDF of `samples`, evaluated
/// exactly on both sides of every jump.
pub fn ks_statistic(samples: &mut [f64], g: &Gmm2Params) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    gmm2_cdf(0.0, g)?;
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut sup = 0.0f64;
    for (i, &z) in samples.iter().enumerate() {
        let c = gmm2_cdf(z, g)?;
        sup = sup.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    Ok(sup)
}

/// KS score of candidate `v` on the hold-out sample `x2`.
pub fn ks_score(v: &DVector<f64>, lambda: f64, x2: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    if x2.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    if x2.nrows() != v.len() {
        return Err(Error::Dimension(format!("candidate length {} vs {} features", v.len(), x2.nrows())));
    }
    let mut proj: Vec<f64> = x2.tr_mul(v).iter().copied().collect();
    ks_statistic(&mut proj, &Gmm2Params::for_candidate(v, lambda, sigma))
}

/// Mean squared distance of `vᵀxⱼ` from its binary rounding, scaled by
/// `‖v‖²`. A diagnostic that only separates candidates at small noise.
pub fn score_round(v: &DVector<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    let vn = v.norm_squared();
    if vn == 0.0 {
        return Err(Error::Degenerate("zero candidate vector".into()));
    }
    let s: f64 = x.tr_mul(v).iter().map(|&p| p.powi(2).min((p - 1.0).powi(2))).sum();
    Ok(s / (x.ncols() as f64 * vn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_limits_and_symmetry() {
        let g = Gmm2Params { p_one: 1.0, var: 0.3 };
        assert!((gmm2_cdf(1.0, &g).unwrap() - 0.5).abs() < 1e-15);
        assert!(gmm2_cdf(1e6, &g).unwrap() == 1.0);
        assert!(gmm2_cdf(-1e6, &g).unwrap() == 0.0);
        assert!(gmm2_cdf(0.0, &Gmm2Params { p_one: 0.5, var: 0.0 }).is_err());
    }

    #[test]
    fn cdf_matches_quadrature() {
        let g = Gmm2Params::for_candidate(&DVector::from_element(1, 1.0), 2f64.sqrt(), 0.2);
        assert!((g.p_one - 0.5).abs() < 1e-15 && (g.var - 0.04).abs() < 1e-15);
        let s = 0.2;
        let dens = |t: f64| {
            let n = |m: f64| (-(t - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            0.5 * n(0.0) + 0.5 * n(1.0)
        };
        let q = simpson(dens, -5.0, 0.5, 20_000);
        assert!((gmm2_cdf(0.5, &g).unwrap() - q).abs() < 1e-12);
    }

    #[test]
    fn single_sample_at_median() {
        let g = Gmm2Params { p_one: 1.0, var: 0.1 };
        let s = ks_statistic(&mut [1.0], &g).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    fn draw(n: usize, g: &Gmm2Params, shift: f64, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::stream(seed, 50, 0);
        (0..n)
            .map(|_| {
                let c = if r.random::<f64>() < g.p_one { 1.0 } else { 0.0 };
                c + shift + g.var.sqrt() * r.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    #[test]
    fn within_dkw_envelope() {
        let g = Gmm2Params { p_one: 0.3, var: 0.09 };
        let n = 2000;
        let bound = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
        let fails = (0..50).filter(|&s| ks_statistic(&mut draw(n, &g, 0.0, s), &g).unwrap() > bound).count();
        // Each exceedance has probability at most 0.01.
        assert!(fails <= 3, "{fails} exceedances");
    }

    #[test]
    fn shifted_sample_separated() {
        let g = Gmm2Params { p_one: 0.3, var: 0.01 };
        assert!(ks_statistic(&mut draw(2000, &g, 1.0, 9), &g).unwrap() >= 0.3);
    }

    #[test]
    fn ks_score_projects_and_validates() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let v = DVector::from_column_slice(&[1.0, 1.0]);
        // Projection is 1, component at 1 has full weight when λ = 1.
        assert!((ks_score(&v, 1.0, &x, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert!(ks_score(&v, 1.0, &DMatrix::zeros(2, 0), 0.1).is_err());
        assert!(ks_score(&v, 1.0, &x, 0.0).is_err());
    }

    #[test]
    fn rounding_score() {
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.25, 0.5]);
        let v = DVector::from_element(1, 1.0);
        assert!((score_round(&v, &x).unwrap() - (0.0625 + 0.25) / 4.0).abs() < 1e-15);
    }
}
