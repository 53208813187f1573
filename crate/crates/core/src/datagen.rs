//! Synthetic instances of `x = Wᵀh + σε` and of the admixture-style
//! binomial observation model. Every generator is a pure function of its
//! arguments and seed; columns use independently derived streams.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, sym_eigen_desc};
use crate::moments::BinaryDistribution;
use crate::rng;

/// Distribution of the hidden vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenLaw {
    /// `h = 1{r ≥ 0.5}` entrywise with `r ~ N(a, R)`.
    GaussianRound { a: Vec<f64>, r: Vec<Vec<f64>> },
    /// Explicit distribution over `{0,1}^d`.
    Atoms(BinaryDistribution),
    /// Continuous allele frequencies, i.i.d. `Beta(a, b)` per entry. Small
    /// shapes pile the mass near 0 and 1 (alleles close to fixation); the
    /// mean `a/(a+b)` sets how often a unit sits near 1.
    Fixation { a: f64, b: f64 },
}

impl HiddenLaw {
    /// Default law for `d` units: `a = 0`, `R = I`, so each unit is on
    /// with probability `1 − Φ(0.5) ≈ 0.31`.
    pub fn default_gaussian(d: usize) -> Self {
        let r = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        HiddenLaw::GaussianRound { a: vec![0.0; d], r }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            HiddenLaw::GaussianRound { a, .. } => Some(a.len()),
            HiddenLaw::Atoms(dist) => Some(dist.dim()),
            HiddenLaw::Fixation { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    /// Columns uniform on the unit sphere.
    Sphere,
    /// Columns i.i.d. symmetric Dirichlet.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// `x = Wᵀh + σε`.
    Gaussian,
    /// `x = ½ Binomial(2, Wᵀh)` entrywise.
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    pub hidden: HiddenLaw,
    pub weights: WeightLaw,
    pub observation: Observation,
    /// Prepend the columns `eᵢ` and `eᵢ + eⱼ` to the hidden matrix.
    pub rigid_block: bool,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn gaussian(d: usize, m: usize, n: usize, sigma: f64, seed: u64) -> Self {
        InstanceSpec {
            d,
            m,
            n,
            sigma,
            hidden: HiddenLaw::default_gaussian(d),
            weights: WeightLaw::Sphere,
            observation: Observation::Gaussian,
            rigid_block: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m < self.d {
            return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ m, got d = {}, m = {}", self.d, self.m)));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma = {} must be nonnegative", self.sigma)));
        }
        if let Some(hd) = self.hidden.dim() {
            if hd != self.d {
                return Err(Error::InvalidInput(format!("hidden law has dimension {hd}, d = {}", self.d)));
            }
        }
        if self.rigid_block && self.n < rigid_block_len(self.d) {
            return Err(Error::InvalidInput(format!(
                "n = {} is smaller than the rigid block ({})",
                self.n,
                rigid_block_len(self.d)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// Generates `(W, H, X)` for a specification.
pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let w = match spec.weights {
        WeightLaw::Sphere => gen_w(spec.d, spec.m, spec.seed)?,
        WeightLaw::Dirichlet { alpha } => gen_dirichlet_w(spec.d, spec.m, alpha, spec.seed)?,
    };
    let h = if spec.rigid_block {
        gen_h_rigid_block(spec.d, spec.n, &spec.hidden, spec.seed)?
    } else {
        gen_h(&spec.hidden, spec.d, spec.n, spec.seed)?
    };
    let x = match spec.observation {
        Observation::Gaussian => gen_x(&w, &h, spec.sigma, spec.seed)?,
        Observation::Binomial => gen_binomial_x(&w, &h, spec.seed)?,
    };
    Ok(Instance { w, h, x })
}

fn gaussian_vector(r: &mut rng::Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// `d×m` weights with columns uniform on the unit sphere, redrawn until full rank.
pub fn gen_w(d: usize, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || m < d {
        return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ m, got d = {d}, m = {m}")));
    }
    for attempt in 0..64u64 {
        let mut w = DMatrix::zeros(d, m);
        for c in 0..m {
            let mut r = rng::stream(seed, rng::GEN_W, (attempt << 32) | c as u64);
            let v = loop {
                let v = gaussian_vector(&mut r, d);
                if v.norm() > 1e-12 {
                    break v;
                }
            };
            w.set_column(c, &(&v / v.norm()));
        }
        if numerical_rank(&w, 1e-10) == d {
            return Ok(w);
        }
    }
    Err(Error::Degenerate("could not draw a full-rank weight matrix".into()))
}

/// `d×m` column-stochastic weights, columns i.i.d. `Dirichlet(α𝟙)`.
pub fn gen_dirichlet_w(d: usize, m: usize, alpha: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("Dirichlet parameter {alpha} must be positive")));
    }
    if d == 0 || m < d {
        return Err(Error::InvalidInput(format!("need 1 ≤ d ≤ m, got d = {d}, m = {m}")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut w = DMatrix::zeros(d, m);
    for c in 0..m {
        let mut r = rng::stream(seed, rng::GEN_W, c as u64);
        let g: Vec<f64> = loop {
            let g: Vec<f64> = (0..d).map(|_| gamma.sample(&mut r)).collect();
            if g.iter().sum::<f64>() > 0.0 {
                break g;
            }
        };
        let s: f64 = g.iter().sum();
        for (i, v) in g.into_iter().enumerate() {
            w[(i, c)] = v / s;
        }
    }
    Ok(w)
}

/// Symmetric square root-like factor `L` with `L Lᵀ = R`; fails if `R` is not PSD.
fn psd_factor(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    if (r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
        return Err(Error::InvalidInput("covariance is not symmetric".into()));
    }
    let (vals, vecs) = sym_eigen_desc(r);
    let scale = vals.first().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    if vals.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::InvalidInput("covariance is not positive semidefinite".into()));
    }
    let mut l = vecs;
    for (c, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(c).scale_mut(s);
    }
    Ok(l)
}

/// Thresholded Gaussian hidden vectors: `hᵢ = 1{rᵢ ≥ 0.5}`, `r ~ N(a, R)`.
pub fn gen_h_gaussian_round(n: usize, a: &[f64], r: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let d = a.len();
    if r.nrows() != d {
        return Err(Error::Dimension(format!("mean has length {d}, covariance is {}x{}", r.nrows(), r.ncols())));
    }
    let l = psd_factor(r)?;
    let a = DVector::from_column_slice(a);
    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, rng::GEN_H, j as u64);
            let z = gaussian_vector(&mut g, d);
            let sample = &a + &l * z;
            sample.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
        })
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

fn gen_h_atoms(dist: &BinaryDistribution, n: usize, seed: u64) -> DMatrix<f64> {
    let atoms = dist.atoms();
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for (_, p) in atoms {
        acc += p;
        cumulative.push(acc);
    }
    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let u: f64 = rng::stream(seed, rng::GEN_H, j as u64).random::<f64>() * acc;
            let at = cumulative.partition_point(|&c| c <= u).min(atoms.len() - 1);
            BinaryDistribution::atom_vector(&atoms[at].0)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn gen_h_fixation(d: usize, n: usize, a: f64, b: f64, seed: u64) -> Result<DMatrix<f64>> {
    let beta = Beta::new(a, b).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, rng::GEN_H, j as u64);
            DVector::from_fn(d, |_, _| beta.sample(&mut g))
        })
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

/// `d×n` hidden matrix from a law.
pub fn gen_h(law: &HiddenLaw, d: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    match law {
        HiddenLaw::GaussianRound { a, r } => {
            let rows = r.len();
            let flat: Vec<f64> = r.iter().flatten().copied().collect();
            if flat.len() != rows * rows {
                return Err(Error::Dimension("covariance rows have unequal lengths".into()));
            }
            let rm = DMatrix::from_row_slice(rows, rows, &flat);
            gen_h_gaussian_round(n, a, &rm, seed)
        }
        HiddenLaw::Atoms(dist) => Ok(gen_h_atoms(dist, n, seed)),
        HiddenLaw::Fixation { a, b } => gen_h_fixation(d, n, *a, *b, seed),
    }
}

pub fn rigid_block_len(d: usize) -> usize {
    d + d * (d - 1) / 2
}

/// The columns `e₁..e_d` followed by `eᵢ + eⱼ` for `i < j`.
pub fn rigid_block(d: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(d, rigid_block_len(d));
    for i in 0..d {
        h[(i, i)] = 1.0;
    }
    let mut c = d;
    for i in 0..d {
        for j in i + 1..d {
            h[(i, c)] = 1.0;
            h[(j, c)] = 1.0;
            c += 1;
        }
    }
    h
}

/// Hidden matrix whose leading columns form the rigid block and whose
/// remaining columns are drawn from `law`.
pub fn gen_h_rigid_block(d: usize, n: usize, law: &HiddenLaw, seed: u64) -> Result<DMatrix<f64>> {
    let b = rigid_block_len(d);
    if n < b {
        return Err(Error::InvalidInput(format!("n = {n} is smaller than the rigid block ({b})")));
    }
    let rest = gen_h(law, d, n - b, seed)?;
    let mut h = DMatrix::zeros(d, n);
    h.columns_mut(0, b).copy_from(&rigid_block(d));
    h.columns_mut(b, n - b).copy_from(&rest);
    Ok(h)
}

/// `X = WᵀH + σE` with `E` standard normal.
pub fn gen_x(w: &DMatrix<f64>, h: &DMatrix<f64>, sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if w.nrows() != h.nrows() {
        return Err(Error::Dimension(format!("W has {} rows, H has {}", w.nrows(), h.nrows())));
    }
    let mut x = w.transpose() * h;
    if sigma > 0.0 {
        let m = x.nrows();
        x.as_mut_slice().par_chunks_mut(m).enumerate().for_each(|(j, col)| {
            let mut g = rng::stream(seed, rng::GEN_NOISE, j as u64);
            for v in col.iter_mut() {
                *v += sigma * g.sample::<f64, _>(StandardNormal);
            }
        });
    }
    Ok(x)
}

/// `X = ½·Binomial(2, F)` entrywise with `F = WᵀH`, so `E[X | H] = F`.
pub fn gen_binomial_x(w: &DMatrix<f64>, h_freq: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    if w.nrows() != h_freq.nrows() {
        return Err(Error::Dimension(format!("W has {} rows, H has {}", w.nrows(), h_freq.nrows())));
    }
    let f = w.transpose() * h_freq;
    if let Some(bad) = f.iter().find(|&&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
        return Err(Error::InvalidInput(format!("frequency {bad} outside [0, 1]")));
    }
    let mut x = f.clone();
    let m = x.nrows();
    x.as_mut_slice().par_chunks_mut(m).enumerate().for_each(|(j, col)| {
        let mut g = rng::stream(seed, rng::GEN_BINOMIAL, j as u64);
        for v in col.iter_mut() {
            let p = v.clamp(0.0, 1.0);
            let a = (g.random::<f64>() < p) as u8 + (g.random::<f64>() < p) as u8;
            *v = a as f64 / 2.0;
        }
    });
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_columns_are_unit_and_deterministic() {
        let w = gen_w(4, 30, 7).unwrap();
        for c in w.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(w, gen_w(4, 30, 7).unwrap());
        assert_ne!(w, gen_w(4, 30, 8).unwrap());
    }

    #[test]
    fn sphere_columns_are_isotropic() {
        let w = gen_w(3, 20_000, 1).unwrap();
        let mean = w.column_mean();
        assert!(mean.amax() < 0.03, "{mean}");
    }

    #[test]
    fn gaussian_round_degenerate_cases() {
        let h = gen_h_gaussian_round(50, &[1.0, 1.0], &DMatrix::zeros(2, 2), 3).unwrap();
        assert!(h.iter().all(|&v| v == 1.0));
        let h = gen_h_gaussian_round(40_000, &[0.5, 0.5], &DMatrix::identity(2, 2), 3).unwrap();
        for i in 0..2 {
            let p = h.row(i).mean();
            assert!((p - 0.5).abs() < 0.015, "{p}");
        }
    }

    #[test]
    fn gaussian_round_rejects_non_psd() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(gen_h_gaussian_round(5, &[0.0, 0.0], &r, 0).is_err());
    }

    #[test]
    fn gaussian_round_joint_matches_quadrature() {
        // P(h₁ = h₂ = 1) = P(r₁ ≥ .5, r₂ ≥ .5) for r ~ N(a, R), computed by
        // integrating the conditional normal tail over r₁.
        let a = [0.3, 0.6];
        let rho = 0.5;
        let r = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let normal = statrs::distribution::Normal::standard();
        use statrs::distribution::{Continuous, ContinuousCDF};
        let steps = 20_000;
        let (lo, hi) = (0.5 - a[0], 8.0);
        let dz = (hi - lo) / steps as f64;
        let mut p11 = 0.0;
        for s in 0..steps {
            let z1 = lo + (s as f64 + 0.5) * dz;
            let cond_mean = a[1] + rho * z1;
            let cond_sd = (1.0 - rho * rho).sqrt();
            p11 += normal.pdf(z1) * (1.0 - normal.cdf((0.5 - cond_mean) / cond_sd)) * dz;
        }
        let h = gen_h_gaussian_round(200_000, &a, &r, 11).unwrap();
        let emp = h.column_iter().filter(|c| c[0] == 1.0 && c[1] == 1.0).count() as f64 / 200_000.0;
        let se = (p11 * (1.0 - p11) / 200_000.0).sqrt();
        assert!((emp - p11).abs() < 4.0 * se, "emp {emp} vs {p11}");
    }

    #[test]
    fn rigid_block_small() {
        let h = rigid_block(2);
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]));
        // u = (½, ½) gives a non-binary projection
        let u = DVector::from_vec(vec![0.5, 0.5]);
        let proj = h.transpose() * u;
        assert!(proj.iter().any(|&v| v == 0.5));
    }

    #[test]
    fn rigid_block_only_basis_vectors_are_binary() {
        // Exhaustive check over a rational lattice of directions: uᵀH binary
        // on the block forces u ∈ {eᵢ}.
        let d = 3;
        let h = rigid_block(d);
        let grid: Vec<f64> = (-8..=8).map(|k| k as f64 / 4.0).collect();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    if a == 0.0 && b == 0.0 && c == 0.0 {
                        continue;
                    }
                    let u = DVector::from_vec(vec![a, b, c]);
                    let binary = (h.transpose() * &u).iter().all(|&v| v == 0.0 || v == 1.0);
                    let basis = [a, b, c].iter().filter(|&&v| v == 1.0).count() == 1
                        && [a, b, c].iter().filter(|&&v| v == 0.0).count() == 2;
                    assert_eq!(binary, basis, "u = {u}");
                }
            }
        }
    }

    #[test]
    fn rigid_block_too_small() {
        assert!(gen_h_rigid_block(3, 5, &HiddenLaw::default_gaussian(3), 0).is_err());
    }

    #[test]
    fn noise_free_and_noise_variance() {
        let w = gen_w(3, 5, 1).unwrap();
        let h = gen_h(&HiddenLaw::default_gaussian(3), 3, 20_000, 2).unwrap();
        assert_eq!(gen_x(&w, &h, 0.0, 3).unwrap(), w.transpose() * &h);
        let x = gen_x(&w, &h, 0.7, 3).unwrap();
        assert_eq!(x, gen_x(&w, &h, 0.7, 3).unwrap());
        let resid = x - w.transpose() * &h;
        let var = resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
        assert!((var - 0.49).abs() < 0.01, "{var}");
    }

    #[test]
    fn dirichlet_columns_sum_to_one() {
        let w = gen_dirichlet_w(3, 200, 1.0, 4).unwrap();
        for c in w.column_iter() {
            assert!((c.sum() - 1.0).abs() < 1e-12);
        }
    }

    fn mean_entropy(w: &DMatrix<f64>) -> f64 {
        w.column_iter()
            .map(|c| -c.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
            .sum::<f64>()
            / w.ncols() as f64
    }

    #[test]
    fn dirichlet_concentration_ordering() {
        let sparse = gen_dirichlet_w(3, 2000, 0.1, 5).unwrap();
        let flat = gen_dirichlet_w(3, 2000, 10.0, 5).unwrap();
        assert!(mean_entropy(&sparse) < mean_entropy(&flat));
        let very_flat = gen_dirichlet_w(3, 2000, 1000.0, 5).unwrap();
        let dev = very_flat.iter().map(|p| (p - 1.0 / 3.0).powi(2)).sum::<f64>() / very_flat.len() as f64;
        assert!(dev < 1e-3);
    }

    #[test]
    fn binomial_observations() {
        let w = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]);
        let h = DMatrix::from_element(1, 40_000, 1.0);
        let x = gen_binomial_x(&w, &h, 9).unwrap();
        assert!(x.row(0).iter().all(|&v| v == 0.0));
        assert!(x.row(1).iter().all(|&v| v == 1.0));
        let row = x.row(2);
        assert!(row.iter().all(|&v| v == 0.0 || v == 0.5 || v == 1.0));
        let mean = row.mean();
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var - 0.125).abs() < 0.005);
    }

    #[test]
    fn binomial_rejects_out_of_range() {
        let w = DMatrix::from_element(1, 1, 2.0);
        let h = DMatrix::from_element(1, 1, 1.0);
        assert!(gen_binomial_x(&w, &h, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = InstanceSpec::gaussian(3, 2, 10, 0.1, 0);
        assert!(generate(&s).is_err());
        s.m = 5;
        let inst = generate(&s).unwrap();
        assert_eq!(inst.x.shape(), (5, 10));
    }
}
