//! Empirical moments, noise correction, whitening, and the exact moments
//! of an explicit binary latent distribution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::tensor::{sorted_triples, SymTensor3};

/// Empirical `μ̂ = Ê[x]`, `M̂ = Ê[x⊗x]`, `T̂ = Ê[x⊗x⊗x]`.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub mu: DVector<f64>,
    pub m: DMatrix<f64>,
    pub t: SymTensor3,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct CorrectedMoments {
    pub m_sigma: DMatrix<f64>,
    pub t_sigma: SymTensor3,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct WhitenedModel {
    /// `m×d`, with `Kᵀ M_σ K = I_d`.
    pub k: DMatrix<f64>,
    pub t_white: SymTensor3,
    pub d: usize,
}

/// `Φ = E[h]`, `Σ = E[h⊗h]`, `Ω = E[h⊗h⊗h]` of a binary latent vector.
#[derive(Debug, Clone)]
pub struct LatentMoments {
    pub phi: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub omega: SymTensor3,
}

/// Explicit distribution over `{0,1}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryDistribution {
    dim: usize,
    atoms: Vec<(Vec<u8>, f64)>,
}

impl BinaryDistribution {
    pub fn new(dim: usize, atoms: Vec<(Vec<u8>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("distribution has no atoms".into()));
        }
        for (h, p) in &atoms {
            if h.len() != dim || h.iter().any(|&b| b > 1) {
                return Err(Error::InvalidInput(format!("atom {h:?} is not in {{0,1}}^{dim}")));
            }
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidInput(format!("invalid probability {p}")));
            }
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(BinaryDistribution { dim, atoms })
    }

    /// Uniform distribution over the given atoms.
    pub fn uniform(dim: usize, atoms: Vec<Vec<u8>>) -> Result<Self> {
        let p = 1.0 / atoms.len() as f64;
        BinaryDistribution::new(dim, atoms.into_iter().map(|h| (h, p)).collect())
    }

    /// Empirical distribution of the columns of a binary `d×n` matrix.
    pub fn empirical(h: &DMatrix<f64>) -> Result<Self> {
        let n = h.ncols();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut counts: std::collections::BTreeMap<Vec<u8>, usize> = Default::default();
        for col in h.column_iter() {
            let key = col
                .iter()
                .map(|&x| match x {
                    v if v == 0.0 => Ok(0u8),
                    v if v == 1.0 => Ok(1u8),
                    v => Err(Error::InvalidInput(format!("non-binary latent entry {v}"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            *counts.entry(key).or_default() += 1;
        }
        let atoms = counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect();
        BinaryDistribution::new(h.nrows(), atoms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(Vec<u8>, f64)] {
        &self.atoms
    }

    pub fn atom_vector(h: &[u8]) -> DVector<f64> {
        DVector::from_iterator(h.len(), h.iter().map(|&b| b as f64))
    }
}

const CHUNK: usize = 2048;

/// Sample moments of the columns of `x` (`m×n`).
pub fn empirical_moments(x: &DMatrix<f64>) -> Result<MomentSet> {
    let (m, n) = x.shape();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let n_pairs = m * (m + 1) / 2;
    let n_triples = m * (m + 1) * (m + 2) / 6;
    // Fixed chunking with an ordered reduction keeps the result bit-identical
    // regardless of thread count.
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s1 = vec![0.0; m];
            let mut s2 = vec![0.0; n_pairs];
            let mut s3 = vec![0.0; n_triples];
            for j in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let col = x.column(j);
                let (mut p2, mut p3) = (0, 0);
                for a in 0..m {
                    let xa = col[a];
                    s1[a] += xa;
                    for b in a..m {
                        let xab = xa * col[b];
                        s2[p2] += xab;
                        p2 += 1;
                        for cc in b..m {
                            s3[p3] += xab * col[cc];
                            p3 += 1;
                        }
                    }
                }
            }
            (s1, s2, s3)
        })
        .collect();
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; n_pairs];
    let mut s3 = vec![0.0; n_triples];
    for (a, b, c) in partials {
        s1.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        s3.iter_mut().zip(c).for_each(|(x, y)| *x += y);
    }
    let nf = n as f64;
    let mu = DVector::from_iterator(m, s1.into_iter().map(|v| v / nf));
    let mut mm = DMatrix::zeros(m, m);
    let mut p2 = 0;
    for a in 0..m {
        for b in a..m {
            mm[(a, b)] = s2[p2] / nf;
            mm[(b, a)] = s2[p2] / nf;
            p2 += 1;
        }
    }
    let mut it = s3.into_iter();
    let t = SymTensor3::from_sorted_fn(m, |_, _, _| it.next().unwrap() / nf);
    Ok(MomentSet { mu, m: mm, t, n })
}

/// Removes the isotropic Gaussian noise contribution:
/// `M_σ = M − σ²I`, `T_σ = T − σ² Σᵢ (μ⊗eᵢ⊗eᵢ + eᵢ⊗μ⊗eᵢ + eᵢ⊗eᵢ⊗μ)`.
pub fn noise_correct(moms: &MomentSet, sigma2: f64) -> Result<CorrectedMoments> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2} must be nonnegative")));
    }
    let m = moms.mu.len();
    let m_sigma = &moms.m - DMatrix::<f64>::identity(m, m) * sigma2;
    let mu = &moms.mu;
    let t = &moms.t;
    let t_sigma = SymTensor3::from_sorted_fn(m, |a, b, c| {
        let mut corr = 0.0;
        if b == c {
            corr += mu[a];
        }
        if a == c {
            corr += mu[b];
        }
        if a == b {
            corr += mu[c];
        }
        t.get(a, b, c) - sigma2 * corr
    });
    Ok(CorrectedMoments { m_sigma, t_sigma, sigma2 })
}

/// `K = V_d Λ_d^{-1/2}` from the top-`d` eigenpairs of `M_σ`.
pub fn whiten(m_sigma: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let m = m_sigma.nrows();
    if m_sigma.ncols() != m {
        return Err(Error::Dimension("second moment must be square".into()));
    }
    if d == 0 || d > m {
        return Err(Error::InvalidInput(format!("latent dimension {d} must be in 1..={m}")));
    }
    let (vals, vecs) = sym_eigen_desc(m_sigma);
    let floor = 1e-12 * vals[0].abs().max(f64::MIN_POSITIVE);
    if !(vals[d - 1] > floor) {
        let rank = vals.iter().take_while(|&&v| v > floor).count();
        return Err(Error::RankDeficient {
            context: format!(
                "whitening needs {d} positive eigenvalues; spectrum gap λ_{} = {:e} vs λ_1 = {:e}",
                d, vals[d - 1], vals[0]
            ),
            rank,
            required: d,
            smallest: vals[d - 1],
        });
    }
    let mut k = DMatrix::zeros(m, d);
    for c in 0..d {
        k.set_column(c, &(vecs.column(c) / vals[c].sqrt()));
    }
    Ok(k)
}

/// `T̃ = T_σ(K, K, K)`.
pub fn whitened_tensor(t_sigma: &SymTensor3, k: &DMatrix<f64>) -> Result<SymTensor3> {
    t_sigma.multilinear_sym(k)
}

impl WhitenedModel {
    pub fn build(corrected: &CorrectedMoments, d: usize) -> Result<Self> {
        let k = whiten(&corrected.m_sigma, d)?;
        let t_white = whitened_tensor(&corrected.t_sigma, &k)?;
        Ok(WhitenedModel { k, t_white, d })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DSigmaOptions {
    /// Eigenvalue `λ_k` counts as signal when `λ_k > (1 + margin)·mean(λ_{k+1..m})`.
    pub margin: f64,
}

impl DSigmaOptions {
    /// Margin scaled to the sampling spread of noise eigenvalues, `4√(m/n)`.
    pub fn for_sample(m: usize, n: usize) -> Self {
        DSigmaOptions { margin: 4.0 * (m as f64 / n.max(1) as f64).sqrt() + 1e-9 }
    }

    pub fn exact() -> Self {
        DSigmaOptions { margin: 1e-6 }
    }
}

/// Estimates the latent dimension and noise variance from the spectrum of
/// the second moment. `d` is the largest index whose eigenvalue stands
/// clearly above the mean of the trailing eigenvalues, and `σ²` is that
/// trailing mean.
pub fn estimate_d_sigma(m_hat: &DMatrix<f64>, opts: DSigmaOptions) -> Result<(usize, f64)> {
    let m = m_hat.nrows();
    if m < 2 || m_hat.ncols() != m {
        return Err(Error::InvalidInput("need a square second moment with m ≥ 2".into()));
    }
    let (vals, _) = sym_eigen_desc(m_hat);
    let top = vals[0].abs();
    let abs_floor = 1e-10 * top;
    let mut d = 0;
    for k in 1..m {
        let trailing = vals[k..].iter().sum::<f64>() / (m - k) as f64;
        if vals[k - 1] > (1.0 + opts.margin) * trailing.max(0.0) + abs_floor {
            d = k;
        }
    }
    if d == 0 {
        return Err(Error::Degenerate(
            "spectrum has no gap; latent dimension undeterminable".into(),
        ));
    }
    let sigma2 = (vals[d..].iter().sum::<f64>() / (m - d) as f64).max(0.0);
    Ok((d, if sigma2 <= abs_floor { 0.0 } else { sigma2 }))
}

/// Exact latent moments by enumerating the atoms.
pub fn latent_population_moments(dist: &BinaryDistribution) -> LatentMoments {
    let d = dist.dim();
    let mut phi = DVector::zeros(d);
    let mut sigma = DMatrix::zeros(d, d);
    for (h, p) in dist.atoms() {
        for i in 0..d {
            if h[i] == 1 {
                phi[i] += p;
                for j in 0..d {
                    if h[j] == 1 {
                        sigma[(i, j)] += p;
                    }
                }
            }
        }
    }
    let omega = SymTensor3::from_sorted_fn(d, |i, j, k| {
        dist.atoms()
            .iter()
            .filter(|(h, _)| h[i] == 1 && h[j] == 1 && h[k] == 1)
            .map(|(_, p)| p)
            .sum()
    });
    LatentMoments { phi, sigma, omega }
}

impl LatentMoments {
    /// Observed noiseless moments `(WᵀΣW, Ω(W,W,W))` for a `d×m` weight matrix.
    pub fn observed(&self, w: &DMatrix<f64>) -> Result<(DMatrix<f64>, SymTensor3)> {
        if w.nrows() != self.phi.len() {
            return Err(Error::Dimension(format!(
                "weight matrix has {} rows, latent dimension is {}",
                w.nrows(),
                self.phi.len()
            )));
        }
        Ok((w.transpose() * &self.sigma * w, self.omega.multilinear_sym(w)?))
    }

    /// Observed first moment `Wᵀ Φ`.
    pub fn observed_mean(&self, w: &DMatrix<f64>) -> DVector<f64> {
        w.transpose() * &self.phi
    }
}

/// Number of sorted index triples, `m(m+1)(m+2)/6`.
pub fn unique_triples(m: usize) -> usize {
    sorted_triples(m).count()
}
