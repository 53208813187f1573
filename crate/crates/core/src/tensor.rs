//! Dense order-3 tensors and their multilinear products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `d×d×d` symmetric tensor, stored as a full row-major array.
///
/// Every constructor symmetrizes, so `get(i, j, k)` is bit-identical for all
/// permutations of `(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor3 {
    dim: usize,
    data: Vec<f64>,
}

/// Dense, not necessarily symmetric, `n1×n2×n3` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.data[at] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Interprets a cubical tensor as symmetric, symmetrizing it.
    pub fn into_symmetric(self) -> Result<SymTensor3> {
        let [a, b, c] = self.dims;
        if a != b || b != c {
            return Err(Error::Dimension(format!("tensor {a}x{b}x{c} is not cubical")));
        }
        SymTensor3::from_vec(a, self.data)
    }
}

/// All distinct permutations of an index triple.
pub(crate) fn permutations(i: usize, j: usize, k: usize) -> Vec<(usize, usize, usize)> {
    let mut p = vec![(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)];
    p.sort_unstable();
    p.dedup();
    p
}

/// Iterator over sorted index triples `i ≤ j ≤ k < d`.
pub(crate) fn sorted_triples(d: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..d).flat_map(move |i| (i..d).flat_map(move |j| (j..d).map(move |k| (i, j, k))))
}

impl SymTensor3 {
    pub fn zeros(dim: usize) -> Self {
        SymTensor3 { dim, data: vec![0.0; dim * dim * dim] }
    }

    /// Builds a tensor from `d³` row-major entries, symmetrizing by
    /// averaging over index permutations.
    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for d = {dim}, got {}",
                dim * dim * dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite tensor entry {bad}")));
        }
        let mut t = SymTensor3 { dim, data };
        t.symmetrize();
        Ok(t)
    }

    /// Builds a tensor from a function of the index triple; the function is
    /// only evaluated on sorted triples `i ≤ j ≤ k`.
    pub fn from_sorted_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = SymTensor3::zeros(dim);
        for (i, j, k) in sorted_triples(dim) {
            t.set_sym(i, j, k, f(i, j, k));
        }
        t
    }

    /// `Σ_r weights[r] · v_r ⊗ v_r ⊗ v_r` with `v_r` the columns of `vectors`.
    pub fn from_rank_one_sum(weights: &[f64], vectors: &DMatrix<f64>) -> Self {
        let d = vectors.nrows();
        SymTensor3::from_sorted_fn(d, |i, j, k| {
            weights
                .iter()
                .enumerate()
                .map(|(r, w)| w * vectors[(i, r)] * vectors[(j, r)] * vectors[(k, r)])
                .sum()
        })
    }

    pub fn rank_one(v: &DVector<f64>) -> Self {
        let d = v.len();
        SymTensor3::from_sorted_fn(d, |i, j, k| v[i] * v[j] * v[k])
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for (i, j, k) in sorted_triples(d) {
            let perms = permutations(i, j, k);
            let first = self.get(i, j, k);
            if perms.iter().all(|&(a, b, c)| self.get(a, b, c) == first) {
                continue;
            }
            let mean = perms.iter().map(|&(a, b, c)| self.get(a, b, c)).sum::<f64>()
                / perms.len() as f64;
            for &(a, b, c) in &perms {
                let at = self.idx(a, b, c);
                self.data[at] = mean;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    /// Writes `v` to `(i, j, k)` and all its permutations.
    pub fn set_sym(&mut self, i: usize, j: usize, k: usize, v: f64) {
        for (a, b, c) in permutations(i, j, k) {
            let at = self.idx(a, b, c);
            self.data[at] = v;
        }
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    /// `self + alpha · other`.
    pub fn axpy(&self, alpha: f64, other: &SymTensor3) -> Result<SymTensor3> {
        self.check_dim(other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(SymTensor3 { dim: self.dim, data })
    }

    /// Subtracts `weight · v⊗v⊗v` in place (deflation).
    pub fn sub_rank_one(&mut self, weight: f64, v: &DVector<f64>) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                let wij = weight * v[i] * v[j];
                let row = (i * d + j) * d;
                for k in 0..d {
                    self.data[row + k] -= wij * v[k];
                }
            }
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(Error::Dimension(format!("tensor dim {} vs operand dim {n}", self.dim)));
        }
        Ok(())
    }

    /// `T(I, u, u)`: `w_j = Σ_{k,l} T_{jkl} u_k u_l`.
    pub fn mode_apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(u.len())?;
        Ok(self.mode_apply_unchecked(u))
    }

    pub(crate) fn mode_apply_unchecked(&self, u: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |j, _| {
            let mut s = 0.0;
            for k in 0..d {
                let row = (j * d + k) * d;
                let mut inner = 0.0;
                for l in 0..d {
                    inner += self.data[row + l] * u[l];
                }
                s += inner * u[k];
            }
            s
        })
    }

    /// `T(I, I, u)`, a symmetric `d×d` matrix.
    pub fn contract_one(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(u.len())?;
        let d = self.dim;
        Ok(DMatrix::from_fn(d, d, |i, j| {
            let row = (i * d + j) * d;
            (0..d).map(|k| self.data[row + k] * u[k]).sum()
        }))
    }

    /// `T(u, u, u)`.
    pub fn value(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.mode_apply(u)?.dot(u))
    }

    /// Multilinear image `T(A, B, C)` with entry
    /// `(i₁,i₂,i₃) = Σ A_{j₁i₁} B_{j₂i₂} C_{j₃i₃} T_{j₁j₂j₃}`.
    pub fn multilinear(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Tensor3> {
        for m in [a, b, c] {
            self.check_dim(m.nrows())?;
        }
        let d = self.dim;
        let (p, q, r) = (a.ncols(), b.ncols(), c.ncols());
        // contract the last mode, then the middle, then the first.
        let mut t1 = vec![0.0; d * d * r];
        for i in 0..d {
            for j in 0..d {
                let row = (i * d + j) * d;
                for c3 in 0..r {
                    t1[(i * d + j) * r + c3] =
                        (0..d).map(|k| self.data[row + k] * c[(k, c3)]).sum();
                }
            }
        }
        let mut t2 = vec![0.0; d * q * r];
        for i in 0..d {
            for c2 in 0..q {
                for c3 in 0..r {
                    t2[(i * q + c2) * r + c3] =
                        (0..d).map(|j| b[(j, c2)] * t1[(i * d + j) * r + c3]).sum();
                }
            }
        }
        let mut out = Tensor3::zeros([p, q, r]);
        for c1 in 0..p {
            for c2 in 0..q {
                for c3 in 0..r {
                    let v = (0..d).map(|i| a[(i, c1)] * t2[(i * q + c2) * r + c3]).sum();
                    out.set(c1, c2, c3, v);
                }
            }
        }
        Ok(out)
    }

    /// `T(A, A, A)`, symmetric by construction.
    pub fn multilinear_sym(&self, a: &DMatrix<f64>) -> Result<SymTensor3> {
        self.multilinear(a, a, a)?.into_symmetric()
    }
}
