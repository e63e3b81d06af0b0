//! Decomposition wrappers with deterministic conventions.
//!
//! The factorization engine is nalgebra; everything exported from here adds
//! the conventions the rest of the crate relies on: descending singular
//! values, nonnegative sigma, a fixed sign rule per column, and square
//! orthonormal factors completed against the standard basis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;

/// A singular value decomposition `A = U diag(sigma) V^T` with square
/// orthonormal `U` (m x m) and `V` (n x n) and `sigma` of length min(m, n).
///
/// The general contract admits unsorted, signed sigma; values produced by
/// [`svd`] are canonical: nonnegative, descending, sign-fixed.
#[derive(Debug, Clone)]
pub struct UsSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl UsSvd {
    /// Reconstruct `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let m = self.u.rows();
        let n = self.v.rows();
        let d = Matrix::diag_embed(m, n, &self.sigma);
        self.u.matmul(&d).matmul_t(&self.v)
    }

    /// Worst orthonormality defect of the two factors.
    pub fn factor_defect(&self) -> f64 {
        self.u
            .orthonormality_defect()
            .max(self.v.orthonormality_defect())
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Fix each column's sign so its largest-magnitude entry is positive, ties
/// broken by lowest row index. When `partner` is given, its matching column
/// is flipped in tandem to preserve the product.
fn canonicalize_signs(primary: &mut Matrix, partner: Option<&mut Matrix>, cols: usize) {
    let mut partner = partner;
    for j in 0..cols {
        let mut best_row = 0;
        let mut best_mag = -1.0f64;
        for i in 0..primary.rows() {
            let mag = primary.get(i, j).abs();
            if mag > best_mag {
                best_mag = mag;
                best_row = i;
            }
        }
        if primary.get(best_row, j) < 0.0 {
            for i in 0..primary.rows() {
                let v = primary.get(i, j);
                primary.set(i, j, -v);
            }
            if let Some(p) = partner.as_deref_mut() {
                if j < p.cols() {
                    for i in 0..p.rows() {
                        let v = p.get(i, j);
                        p.set(i, j, -v);
                    }
                }
            }
        }
    }
}

/// Extend `have` orthonormal columns to a full square basis by Gram-Schmidt
/// against standard basis vectors, smallest index first. `exclude` lists
/// extra directions the completion must stay orthogonal to.
pub fn complete_orthonormal(have: &Matrix, exclude: &[Vec<f64>]) -> Result<Matrix> {
    let dim = have.rows();
    let mut cols: Vec<Vec<f64>> = (0..have.cols()).map(|j| have.col(j)).collect();
    let mut guard = exclude.to_vec();
    let mut completed: Vec<Vec<f64>> = Vec::new();
    let needed = dim - cols.len();

    let orth = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _pass in 0..2 {
            for b in basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (x, c) in v.iter_mut().zip(b) {
                    *x -= dot * c;
                }
            }
        }
    };

    // Normalize the guard directions against the kept columns so they only
    // contribute genuinely new constraints.
    let mut constraints = cols.clone();
    let mut kept_guard = Vec::new();
    for g in guard.drain(..) {
        let mut v = g;
        orth(&mut v, &constraints);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            constraints.push(v.clone());
            kept_guard.push(v);
        }
    }

    for e in 0..dim {
        if completed.len() == needed {
            break;
        }
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        orth(&mut v, &constraints);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            constraints.push(v.clone());
            completed.push(v);
        }
    }
    if completed.len() < needed {
        return Err(Error::Decomposition(
            "orthonormal completion exhausted the standard basis".into(),
        ));
    }
    cols.extend(completed);
    let mut out = Matrix::zeros(dim, dim);
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            out.set(i, j, x);
        }
    }
    Ok(out)
}

/// Canonical SVD: sigma nonnegative and descending, U and V square
/// orthonormal, and the largest-magnitude entry of each U column positive
/// (V adjusted in tandem for the first min(m, n) columns).
pub fn svd(a: &Matrix) -> Result<UsSvd> {
    if !a.is_finite() {
        return Err(Error::NonFinite { context: "svd" });
    }
    let (m, n) = a.shape();
    let k = m.min(n);
    let dec = to_dmatrix(a).svd(true, true);
    let u_thin = dec
        .u
        .as_ref()
        .ok_or_else(|| Error::Decomposition("svd did not return U".into()))?;
    let v_t = dec
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Decomposition("svd did not return V^T".into()))?;
    let mut sigma: Vec<f64> = dec.singular_values.iter().copied().collect();
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::Decomposition("non-finite singular values".into()));
    }

    // Descending sort with a stable permutation applied to both factors.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));
    let sorted_sigma: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    sigma = sorted_sigma;

    let mut u = Matrix::from_fn(m, k, |i, j| u_thin[(i, order[j])]);
    let mut v = Matrix::from_fn(n, k, |i, j| v_t[(order[j], i)]);
    canonicalize_signs(&mut u, Some(&mut v), k);

    let mut u_full = if k == m {
        u
    } else {
        complete_orthonormal(&u, &[])?
    };
    let mut v_full = if k == n {
        v
    } else {
        complete_orthonormal(&v, &[])?
    };
    // Completed columns carry no sigma pairing; fix their sign standalone so
    // the whole factor is deterministic.
    if k < m {
        canonicalize_signs(&mut u_full, None, m);
    }
    if k < n {
        canonicalize_signs(&mut v_full, None, n);
    }

    Ok(UsSvd {
        u: u_full,
        sigma,
        v: v_full,
    })
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvector signs canonicalized. Input is symmetrized first.
pub fn sym_eigen(a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if !a.is_finite() {
        return Err(Error::NonFinite { context: "sym_eigen" });
    }
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch {
            context: "sym_eigen",
            expected: "square matrix".into(),
            found: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let dec = nalgebra::SymmetricEigen::new(to_dmatrix(&sym));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        dec.eigenvalues[j]
            .partial_cmp(&dec.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let eigs: Vec<f64> = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    if eigs.iter().any(|e| !e.is_finite()) {
        return Err(Error::Decomposition("non-finite eigenvalues".into()));
    }
    let mut q = Matrix::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    canonicalize_signs(&mut q, None, n);
    Ok((q, eigs))
}

/// Inverse of a general square matrix via LU.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch {
            context: "inverse",
            expected: "square matrix".into(),
            found: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    to_dmatrix(a)
        .lu()
        .try_inverse()
        .map(|m| from_dmatrix(&m))
        .ok_or_else(|| Error::RankDeficient("matrix is singular".into()))
}

/// Inverse of a symmetric positive semidefinite matrix through its
/// eigendecomposition. Errors if any eigenvalue falls at or below
/// `rel_cutoff` times the largest.
pub fn inv_psd_checked(a: &Matrix, rel_cutoff: f64) -> Result<Matrix> {
    let (q, eigs) = sym_eigen(a)?;
    let max = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_cutoff * max.max(f64::MIN_POSITIVE);
    if eigs.iter().any(|&e| e <= cutoff) {
        return Err(Error::RankDeficient(format!(
            "eigenvalue at or below relative cutoff {rel_cutoff:.1e}"
        )));
    }
    let inv_d: Vec<f64> = eigs.iter().map(|&e| 1.0 / e).collect();
    let n = a.rows();
    Ok(q.matmul(&Matrix::diag_embed(n, n, &inv_d)).matmul_t(&q))
}

/// Singular values only, canonical (descending, nonnegative).
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "singular_values",
        });
    }
    let sv = to_dmatrix(a).singular_values();
    let mut out: Vec<f64> = sv.iter().copied().collect();
    out.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_svd_is_identity() {
        let out = svd(&Matrix::identity(3)).unwrap();
        assert!(out.u.max_abs_diff(&Matrix::identity(3)) < 1e-14);
        assert!(out.v.max_abs_diff(&Matrix::identity(3)) < 1e-14);
        assert!(out.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-14));
    }

    #[test]
    fn signed_diagonal_input() {
        let a = Matrix::diag(&[2.0, -3.0]);
        let out = svd(&a).unwrap();
        assert!((out.sigma[0] - 3.0).abs() < 1e-12);
        assert!((out.sigma[1] - 2.0).abs() < 1e-12);
        assert!(out.reconstruct().max_abs_diff(&a) < 1e-12);
        assert!(out.factor_defect() < 1e-12);
    }

    #[test]
    fn rectangular_reconstruction_and_completion() {
        let mut rng = Rng::new(12);
        for &(m, n) in &[(5usize, 3usize), (3, 5), (7, 7), (1, 4)] {
            let a = Matrix::random_normal(m, n, &mut rng);
            let out = svd(&a).unwrap();
            assert_eq!(out.u.shape(), (m, m));
            assert_eq!(out.v.shape(), (n, n));
            assert_eq!(out.sigma.len(), m.min(n));
            let scale = a.frob_norm().max(1.0);
            assert!(out.reconstruct().sub(&a).frob_norm() <= 1e-10 * scale);
            assert!(out.factor_defect() < 1e-10);
            for w in out.sigma.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert!(out.sigma.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn svd_rejects_nonfinite() {
        let mut a = Matrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.as_mut_slice()[3] = f64::INFINITY;
        assert!(matches!(svd(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn sym_eigen_descending_and_reconstructs() {
        let mut rng = Rng::new(4);
        let g = Matrix::random_normal(6, 6, &mut rng);
        let s = g.matmul_t(&g);
        let (q, e) = sym_eigen(&s).unwrap();
        for w in e.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let rec = q.matmul(&Matrix::diag(&e)).matmul_t(&q);
        assert!(rec.max_abs_diff(&s) < 1e-9 * s.max_abs().max(1.0));
    }

    #[test]
    fn psd_inverse_checked() {
        let mut rng = Rng::new(8);
        let g = Matrix::random_normal(5, 5, &mut rng);
        let s = g.matmul_t(&g).add(&Matrix::identity(5));
        let inv = inv_psd_checked(&s, 1e-10).unwrap();
        assert!(s.matmul(&inv).max_abs_diff(&Matrix::identity(5)) < 1e-9);

        // Rank-deficient input is an error, not noise.
        let low = Matrix::from_fn(3, 3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        assert!(matches!(
            inv_psd_checked(&low, 1e-10),
            Err(Error::RankDeficient(_))
        ));
    }
}
