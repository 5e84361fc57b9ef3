//! Dense matrices and the few decompositions the optimizers rely on.
//!
//! Everything in the crate works on [`DenseMatrix`], a row-major f64 matrix
//! backed by `nalgebra`. The public constructors reject non-finite entries so
//! that NaN/Inf can only ever appear downstream through arithmetic, which is
//! exactly where divergence detection looks for them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when no explicit tolerance is given:
/// `1e-12 * max(rows, cols)`.
pub fn default_pinv_rtol(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols) as f64
}

/// Dense, heap-allocated f64 matrix with row-major construction and access.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    data: DMatrix<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
        }
        Ok(DenseMatrix {
            data: DMatrix::from_row_slice(rows, cols, entries),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            data: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix {
            data: DMatrix::identity(n, n),
        }
    }

    /// Square matrix with `diag` on the diagonal, zeros elsewhere.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(bad) = diag.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
        }
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in diag.iter().enumerate() {
            m[(i, i)] = *v;
        }
        Ok(DenseMatrix { data: m })
    }

    /// Column vector (n x 1).
    pub fn column(entries: &[f64]) -> Result<Self> {
        Self::from_row_major(entries.len(), 1, entries)
    }

    pub(crate) fn from_inner(data: DMatrix<f64>) -> Self {
        DenseMatrix { data }
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// Entries in row-major order, i.e. the `vec(W)` flattening used when an
    /// objective treats the parameter matrix as a vector.
    pub fn to_row_major_vec(&self) -> Vec<f64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix {
            data: self.data.transpose(),
        }
    }

    /// Matrix product. Panics on inner-dimension mismatch; shape agreement is
    /// an internal invariant everywhere this is called.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols(),
            rhs.rows(),
            "matmul {}x{} by {}x{}",
            self.rows(),
            self.cols(),
            rhs.rows(),
            rhs.cols()
        );
        DenseMatrix {
            data: &self.data * &rhs.data,
        }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            data: &self.data + &rhs.data,
        }
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            data: &self.data - &rhs.data,
        }
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            data: &self.data * c,
        }
    }

    /// `self + c * rhs`, fused to avoid a temporary in the hot step loops.
    pub fn add_scaled(&self, c: f64, rhs: &DenseMatrix) -> DenseMatrix {
        let mut out = self.data.clone();
        out.zip_apply(&rhs.data, |o, r| *o += c * r);
        DenseMatrix { data: out }
    }

    /// Entrywise product, same shape required.
    pub fn hadamard(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "hadamard shape mismatch");
        DenseMatrix {
            data: self.data.component_mul(&rhs.data),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.norm_squared()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Frobenius inner product `<a, b> = sum_ij a_ij b_ij`.
pub fn frobenius_inner(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "frobenius_inner of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.data.dot(&b.data))
}

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below
/// `rel_tol * sigma_max` are treated as zero.
pub fn pseudo_inverse(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    if !m.is_all_finite() {
        return Err(Error::InvalidMatrix(
            "pseudo_inverse of matrix with non-finite entries".into(),
        ));
    }
    if !(rel_tol.is_finite() && rel_tol >= 0.0) {
        return Err(Error::InvalidMatrix(format!(
            "pseudo_inverse tolerance must be finite and non-negative, got {rel_tol}"
        )));
    }
    let svd = m.data.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = rel_tol * sigma_max;
    let k = svd.singular_values.len();
    let mut inv_sigma = DMatrix::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            inv_sigma[(i, i)] = 1.0 / s;
        }
    }
    Ok(DenseMatrix {
        data: v_t.transpose() * inv_sigma * u.transpose(),
    })
}

/// Pseudoinverse with the default tolerance for the matrix shape.
pub fn pseudo_inverse_default(m: &DenseMatrix) -> Result<DenseMatrix> {
    pseudo_inverse(m, default_pinv_rtol(m.rows(), m.cols()))
}

/// Orthonormal basis for the column space: the left singular vectors whose
/// singular values exceed `rel_tol * sigma_max`. Returns the basis as columns
/// together with the numerical rank.
pub fn orthonormal_range_basis(m: &DenseMatrix, rel_tol: f64) -> Result<(DenseMatrix, usize)> {
    if !m.is_all_finite() {
        return Err(Error::InvalidMatrix(
            "range basis of matrix with non-finite entries".into(),
        ));
    }
    let svd = m.data.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd requested u");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = rel_tol * sigma_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    let basis = u.columns(0, rank).into_owned();
    Ok((DenseMatrix { data: basis }, rank))
}

/// Smallest and largest eigenvalues of the symmetric part `(m + m^T) / 2`.
/// The input must be square and symmetric to a relative Frobenius tolerance
/// of 1e-10.
pub fn sym_eig_extremes(m: &DenseMatrix) -> Result<(f64, f64)> {
    if m.rows() != m.cols() {
        return Err(Error::InvalidMatrix(format!(
            "sym_eig_extremes of non-square {:?}",
            m.shape()
        )));
    }
    if !m.is_all_finite() {
        return Err(Error::InvalidMatrix(
            "sym_eig_extremes of matrix with non-finite entries".into(),
        ));
    }
    let asym = (&m.data - m.data.transpose()).norm();
    let scale = m.data.norm().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidMatrix(format!(
            "matrix is not symmetric: |m - m^T| = {asym:.3e} against scale {scale:.3e}"
        )));
    }
    let sym = (&m.data + m.data.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    Ok((lo, hi))
}

/// Solves `a x = b` for symmetric positive definite `a`, falling back to LU
/// when the Cholesky factorization fails. `b` may have several columns.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidMatrix(format!(
            "solve_spd with non-square {:?}",
            a.shape()
        )));
    }
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "solve_spd: lhs {:?} vs rhs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if let Some(chol) = nalgebra::Cholesky::new(a.data.clone()) {
        return Ok(DenseMatrix {
            data: chol.solve(&b.data),
        });
    }
    let lu = nalgebra::LU::new(a.data.clone());
    lu.solve(&b.data)
        .map(|data| DenseMatrix { data })
        .ok_or_else(|| Error::InvalidMatrix("solve_spd: singular system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    fn random_matrix(rng: &mut RandomStream, rows: usize, cols: usize) -> DenseMatrix {
        let entries: Vec<f64> = (0..rows * cols).map(|_| rng.standard_normal()).collect();
        DenseMatrix::from_row_major(rows, cols, &entries).unwrap()
    }

    #[test]
    fn row_major_layout() {
        let m = DenseMatrix::from_row_major(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.to_row_major_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn construction_rejects_non_finite() {
        let err = DenseMatrix::from_row_major(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(err, Err(Error::InvalidMatrix(_))));
        let err = DenseMatrix::from_row_major(1, 2, &[f64::INFINITY, 0.0]);
        assert!(matches!(err, Err(Error::InvalidMatrix(_))));
        let err = DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn frobenius_inner_examples() {
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let ones = DenseMatrix::from_row_major(2, 2, &[1.0; 4]).unwrap();
        assert_eq!(frobenius_inner(&a, &ones).unwrap(), 10.0);
        assert_eq!(frobenius_inner(&a, &a).unwrap(), 30.0);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(frobenius_inner(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn frobenius_inner_is_bilinear() {
        let mut rng = RandomStream::from_seed(31);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 4);
            let b = random_matrix(&mut rng, 3, 4);
            let c = random_matrix(&mut rng, 3, 4);
            let lhs = frobenius_inner(&a, &b.add_scaled(2.5, &c)).unwrap();
            let rhs =
                frobenius_inner(&a, &b).unwrap() + 2.5 * frobenius_inner(&a, &c).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            assert_relative_eq!(
                frobenius_inner(&a, &b).unwrap(),
                frobenius_inner(&b, &a).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn pinv_of_identity_and_diagonal() {
        let eye = DenseMatrix::identity(4);
        let pinv = pseudo_inverse_default(&eye).unwrap();
        assert!(pinv.sub(&eye).max_abs() < 1e-12);

        let d = DenseMatrix::from_diagonal(&[2.0, 0.0, 5.0]).unwrap();
        let pinv = pseudo_inverse_default(&d).unwrap();
        let expect = DenseMatrix::from_diagonal(&[0.5, 0.0, 0.2]).unwrap();
        assert!(pinv.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn pinv_of_invertible_matches_inverse() {
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let pinv = pseudo_inverse_default(&a).unwrap();
        let inv = DenseMatrix::from_row_major(2, 2, &[-2.0, 1.0, 1.5, -0.5]).unwrap();
        assert!(pinv.sub(&inv).max_abs() < 1e-9);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero() {
        let z = DenseMatrix::zeros(3, 2);
        let pinv = pseudo_inverse_default(&z).unwrap();
        assert_eq!(pinv.shape(), (2, 3));
        assert_eq!(pinv.max_abs(), 0.0);
    }

    // The four Moore-Penrose identities on random matrices, including
    // rank-deficient ones built as low-rank products.
    #[test]
    fn moore_penrose_identities() {
        let mut rng = RandomStream::from_seed(7);
        let shapes = [(3, 3, 3), (5, 3, 3), (3, 5, 2), (6, 4, 2), (4, 4, 1)];
        for &(m, n, k) in &shapes {
            let a = if k < m.min(n) {
                let left = random_matrix(&mut rng, m, k);
                let right = random_matrix(&mut rng, k, n);
                left.matmul(&right)
            } else {
                random_matrix(&mut rng, m, n)
            };
            let p = pseudo_inverse_default(&a).unwrap();
            let apa = a.matmul(&p).matmul(&a);
            let pap = p.matmul(&a).matmul(&p);
            let ap = a.matmul(&p);
            let pa = p.matmul(&a);
            let scale = a.max_abs().max(1.0);
            assert!(apa.sub(&a).max_abs() < 1e-9 * scale, "A P A = A failed");
            assert!(
                pap.sub(&p).max_abs() < 1e-9 * p.max_abs().max(1.0),
                "P A P = P failed"
            );
            assert!(ap.sub(&ap.transpose()).max_abs() < 1e-9, "(AP)^T = AP failed");
            assert!(pa.sub(&pa.transpose()).max_abs() < 1e-9, "(PA)^T = PA failed");
        }
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let mut bad = DenseMatrix::zeros(2, 2);
        bad.data[(0, 0)] = f64::NAN;
        assert!(matches!(
            pseudo_inverse_default(&bad),
            Err(Error::InvalidMatrix(_))
        ));
    }

    #[test]
    fn range_basis_rank_and_orthonormality() {
        let mut rng = RandomStream::from_seed(13);
        let left = random_matrix(&mut rng, 5, 2);
        let right = random_matrix(&mut rng, 2, 4);
        let a = left.matmul(&right);
        let (basis, rank) = orthonormal_range_basis(&a, default_pinv_rtol(5, 4)).unwrap();
        assert_eq!(rank, 2);
        assert_eq!(basis.shape(), (5, 2));
        let gram = basis.transpose().matmul(&basis);
        assert!(gram.sub(&DenseMatrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn sym_eig_examples() {
        let d = DenseMatrix::from_diagonal(&[10.0, 1.0, 1.0]).unwrap();
        let (lo, hi) = sym_eig_extremes(&d).unwrap();
        assert_relative_eq!(lo, 1.0, max_relative = 1e-12);
        assert_relative_eq!(hi, 10.0, max_relative = 1e-12);

        let scalar = DenseMatrix::from_row_major(1, 1, &[3.5]).unwrap();
        assert_eq!(sym_eig_extremes(&scalar).unwrap(), (3.5, 3.5));

        // Rank-one averaging projector has spectrum {0, 1}.
        let h = DenseMatrix::from_row_major(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let (lo, hi) = sym_eig_extremes(&h).unwrap();
        assert!(lo.abs() < 1e-12);
        assert_relative_eq!(hi, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sym_eig_rejects_bad_input() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(sym_eig_extremes(&rect), Err(Error::InvalidMatrix(_))));
        let asym = DenseMatrix::from_row_major(2, 2, &[0.0, 1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(sym_eig_extremes(&asym), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn solve_spd_matches_hand_inverse() {
        let a = DenseMatrix::from_row_major(2, 2, &[4.0, 1.0, 1.0, 3.0]).unwrap();
        let b = DenseMatrix::column(&[1.0, 2.0]).unwrap();
        let x = solve_spd(&a, &b).unwrap();
        // Inverse of [[4,1],[1,3]] is (1/11)[[3,-1],[-1,4]].
        assert_relative_eq!(x.get(0, 0), 1.0 / 11.0, max_relative = 1e-12);
        assert_relative_eq!(x.get(1, 0), 7.0 / 11.0, max_relative = 1e-12);
    }
}
