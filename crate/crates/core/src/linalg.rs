//! Small dense linear algebra over a generic [`Scalar`].
//!
//! Only what the estimators need: a row-major matrix, Cholesky with jitter
//! escalation, triangular solves, and a cyclic Jacobi eigensolver used for
//! the spectral (SVD-equivalent) fallback and pseudo-inverses.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn add_diagonal(&mut self, shift: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + shift;
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Smallest and largest absolute diagonal entries; cheap conditioning hint.
    fn diag_range(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for i in 0..self.rows.min(self.cols) {
            let d = self[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if a pivot is not
/// strictly positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    assert!(a.is_square());
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn forward_substitute<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let s = b[i] - dot(&l.row(i)[..i], &x[..i]);
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn backward_substitute_transpose<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let xi = x[i] / l[(i, i)];
        x[i] = xi;
        for k in 0..i {
            x[k] = x[k] - l[(i, k)] * xi;
        }
    }
    x
}

pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let y = forward_substitute(l, b);
    backward_substitute_transpose(l, &y)
}

/// Result of an SPD solve, with the diagonal jitter that was needed (zero if
/// the plain factorization succeeded).
#[derive(Clone, Debug)]
pub struct SpdSolution<T> {
    pub x: Vec<T>,
    pub jitter: T,
}

/// Solves a symmetric positive-definite system by Cholesky.
///
/// On factorization failure the diagonal is shifted by `1e-10 * trace / n`,
/// and the shift grows tenfold, for at most three retries.
pub fn solve_spd_with_jitter<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<SpdSolution<T>> {
    if !a.is_square() || a.rows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    if let Some(l) = cholesky(a) {
        return Ok(SpdSolution {
            x: cholesky_solve(&l, b),
            jitter: T::zero(),
        });
    }
    let n = a.rows();
    let trace = a.trace();
    let mut jitter = T::lit(1e-10) * trace.abs() / T::from_usize_lossy(n.max(1));
    if !(jitter > T::zero()) {
        jitter = T::epsilon();
    }
    for _ in 0..3 {
        let mut shifted = a.clone();
        shifted.add_diagonal(jitter);
        if let Some(l) = cholesky(&shifted) {
            return Ok(SpdSolution {
                x: cholesky_solve(&l, b),
                jitter,
            });
        }
        jitter = jitter * T::lit(10.0);
    }
    let (lo, hi) = a.diag_range();
    Err(Error::Numerical {
        message: format!(
            "Cholesky failed after jitter escalation (diagonal range [{:e}, {:e}])",
            lo.as_f64(),
            hi.as_f64()
        ),
        n,
        trace: trace.as_f64(),
        jitter: (jitter / T::lit(10.0)).as_f64(),
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the matrix whose columns are the
/// corresponding unit eigenvectors.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    if !a.is_square() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale: T = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)] * a[(i, j)])
        .sum::<T>()
        .sqrt();
    if scale == T::zero() {
        return Ok((vec![T::zero(); n], v));
    }
    let tol = T::epsilon() * scale;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[(i, i)]).collect();
    Ok((vals, v))
}

/// Applies the pseudo-inverse of a symmetric matrix to `b`, discarding
/// eigen-directions whose magnitude is below `rel_tol` times the largest.
///
/// For symmetric matrices the singular values are the absolute eigenvalues,
/// so this is the SVD pseudo-inverse.
pub fn symmetric_pinv_solve<T: Scalar>(a: &Matrix<T>, b: &[T], rel_tol: T) -> Result<Vec<T>> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    let (vals, vecs) = symmetric_eigen(a)?;
    let n = vals.len();
    let largest = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cutoff = rel_tol * largest;
    let mut x = vec![T::zero(); n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cutoff || lam == T::zero() {
            continue;
        }
        let proj: T = (0..n).map(|i| vecs[(i, k)] * b[i]).sum();
        let coef = proj / lam;
        for i in 0..n {
            x[i] = x[i] + coef * vecs[(i, k)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd3();
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[(i, k)] * l[(j, k)]).sum();
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spd_solve_matches_product() {
        let a = spd3();
        let b = [1.0, -2.0, 0.5];
        let sol = solve_spd_with_jitter(&a, &b).unwrap();
        assert_eq!(sol.jitter, 0.0);
        let back = a.mul_vec(&sol.x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_psd_needs_jitter() {
        // rank one: [1 1; 1 1]
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sol = solve_spd_with_jitter(&a, &[1.0, 1.0]).unwrap();
        assert!(sol.jitter > 0.0);
    }

    #[test]
    fn indefinite_errors_with_diagnostics() {
        let a = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        match solve_spd_with_jitter(&a, &[1.0, 1.0]) {
            Err(Error::Numerical { n, .. }) => assert_eq!(n, 2),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let a = spd3();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum();
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
        let tr: f64 = vals.iter().sum();
        assert!((tr - 9.0).abs() < 1e-12);
    }

    #[test]
    fn pinv_gives_min_norm_on_rank_deficient() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let x: Vec<f64> = symmetric_pinv_solve(&a, &[2.0, 2.0], 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let a = Matrix::<f32>::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let sol = solve_spd_with_jitter(&a, &[1.0, 1.0]).unwrap();
        let back = a.mul_vec(&sol.x);
        assert!((back[0] - 1.0).abs() < 1e-5);
    }
}
