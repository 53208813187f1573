//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the eigenvector for `values[k]`.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Orthonormal basis of the complement of the unit vector `u`, as the last
/// `d-1` columns of the Householder reflector mapping `e₁` to `u`.
pub fn complement_basis(u: &DVector<f64>) -> DMatrix<f64> {
    let d = u.len();
    if d <= 1 {
        return DMatrix::zeros(d, 0);
    }
    // H = I - 2 w wᵀ / (wᵀw). With w = e₁ - u it maps e₁ to u; when u is
    // close to e₁ use w = e₁ + u (maps e₁ to -u) so that w stays away from 0.
    let mut w = if u[0] > 0.0 { u.clone() } else { -u.clone() };
    w[0] += 1.0;
    let ww = w.dot(&w);
    let mut basis = DMatrix::zeros(d, d - 1);
    for c in 1..d {
        for r in 0..d {
            let e = if r == c { 1.0 } else { 0.0 };
            basis[(r, c - 1)] = e - 2.0 * w[r] * w[c] / ww;
        }
    }
    basis
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&top) if top == 0.0 => 0,
        Some(&top) => s.iter().filter(|&&x| x > rel_tol * top).count(),
    }
}

/// Moore-Penrose pseudo-inverse of a full-column-rank or full-row-rank matrix.
/// Fails when the smaller dimension is not attained.
pub fn pinv_full_rank(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let required = a.nrows().min(a.ncols());
    let s = singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE) * (a.nrows().max(a.ncols()) as f64);
    let rank = s.iter().filter(|&&x| x > tol).count();
    if rank < required || top == 0.0 {
        return Err(Error::RankDeficient {
            context: context.to_string(),
            rank,
            required,
            smallest: s.last().copied().unwrap_or(0.0),
        });
    }
    a.clone()
        .pseudo_inverse(tol)
        .map_err(|e| Error::Degenerate(e.to_string()))
}

/// Solves the symmetric positive-definite system `a x = b` (multiple
/// right-hand sides) by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let deficient = || {
        let s = singular_values(a);
        Error::RankDeficient {
            context: context.to_string(),
            rank: numerical_rank(a, 1e-12),
            required: a.nrows(),
            smallest: s.last().copied().unwrap_or(0.0),
        }
    };
    let chol = a.clone().cholesky().ok_or_else(deficient)?;
    // A pivot this small means the matrix is singular up to rounding.
    let scale = a.diagonal().amax();
    let l = chol.l_dirty();
    if (0..a.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(deficient());
    }
    Ok(chol.solve(b))
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn complement_is_orthonormal_and_orthogonal_to_u() {
        let mut rng = crate::rng::stream(3, 0, 0);
        for d in 1..7 {
            for _ in 0..20 {
                let mut u = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
                u /= u.norm();
                let p = complement_basis(&u);
                assert_eq!(p.ncols(), d - 1);
                let gram = p.transpose() * &p;
                assert!((gram - DMatrix::identity(d - 1, d - 1)).amax() < 1e-13);
                assert!((p.transpose() * &u).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn complement_of_basis_vectors() {
        for sign in [1.0, -1.0] {
            let u = DVector::from_vec(vec![sign, 0.0, 0.0]);
            let p = complement_basis(&u);
            assert!((p.transpose() * &u).amax() < 1e-15);
            assert!((p.transpose() * &p - DMatrix::identity(2, 2)).amax() < 1e-15);
        }
    }

    #[test]
    fn eigen_desc_sorted() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pinv_rejects_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(pinv_full_rank(&a, "t"), Err(Error::RankDeficient { rank: 1, .. })));
    }
}
