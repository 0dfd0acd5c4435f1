//! Positive-definite kernels, Gram matrices and cross-kernel vectors.
//!
//! The Gaussian kernel uses the length-scale convention
//!
//! ```text
//! k(x, y) = exp(-gamma^2 * ||x - y||^2)
//! ```
//!
//! i.e. `gamma` multiplies the distance *inside* the square. This is not the
//! common `exp(-||x - y||^2 / (2 l^2))` form: `gamma = 1 / (sqrt(2) l)`
//! converts between the two.
//!
//! The linear kernel is the plain inner product with no bias term. Learners
//! that need an intercept append a constant `1` coordinate to contexts
//! (see [`augment_bias`]).

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    /// Length-scale; only meaningful for [`KernelKind::Gaussian`].
    pub gamma: T,
    /// Upper bound on `k(x, x)` over the context domain.
    pub kappa: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn gaussian(gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self {
            kind: KernelKind::Gaussian,
            gamma,
            kappa: T::one(),
        })
    }

    /// Linear kernel on a domain where `<x, x> <= kappa`.
    pub fn linear(kappa: T) -> Result<Self> {
        if !(kappa > T::zero()) || !kappa.is_finite() {
            return Err(Error::invalid(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(Self {
            kind: KernelKind::Linear,
            gamma: T::one(),
            kappa,
        })
    }

    /// Linear kernel on the box `[-bound, bound]^dim`.
    pub fn linear_on_box(bound: T, dim: usize) -> Result<Self> {
        Self::linear(bound * bound * T::from_usize_lossy(dim))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        match self.kind {
            KernelKind::Gaussian => {
                let mut sq = T::zero();
                for (&a, &b) in x.iter().zip(y) {
                    let d = a - b;
                    sq = sq + d * d;
                }
                (-(self.gamma * self.gamma) * sq).exp()
            }
            KernelKind::Linear => dot(x, y),
        }
    }

    pub fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        check_dim(x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_points<T>(points: &[Vec<T>]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("point list is empty"))?;
    let d = first.len();
    for p in points {
        check_dim(d, p.len())?;
    }
    Ok(d)
}

pub fn kernel_eval<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    spec.eval(x, y)
}

/// `[K]_ij = k(x_i, x_j)`; the upper triangle is computed once and mirrored so
/// the result is exactly symmetric.
pub fn gram_matrix<T: Scalar>(spec: &KernelSpec<T>, points: &[Vec<T>]) -> Result<Matrix<T>> {
    check_points(points)?;
    let n = points.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Entry `s` is `k(points[s], x)`.
pub fn cross_vector<T: Scalar>(spec: &KernelSpec<T>, points: &[Vec<T>], x: &[T]) -> Result<Vec<T>> {
    let d = check_points(points)?;
    check_dim(d, x.len())?;
    Ok(points.iter().map(|p| spec.eval_unchecked(p, x)).collect())
}

/// Appends a constant `1` coordinate.
pub fn augment_bias<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(T::one());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_self_similarity_is_one() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(k.eval(&[0.3, -0.7], &[0.3, -0.7]).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_unit_distance() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let v = k.eval(&[0.0, 0.0], &[0.6, 0.8]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn linear_inner_product() {
        let k = KernelSpec::linear(10.0).unwrap();
        assert_eq!(k.eval(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(
            k.eval(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_gamma_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::linear(f64::NAN).is_err());
    }

    #[test]
    fn gram_of_coincident_points_is_ones() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let g = gram_matrix(&k, &[vec![0.0], vec![0.0]]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g[(i, j)], 1.0);
            }
        }
    }

    #[test]
    fn gram_linear_orthonormal_is_identity() {
        let k = KernelSpec::linear(1.0).unwrap();
        let g = gram_matrix(&k, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(g, Matrix::identity(2));
    }

    #[test]
    fn gram_gaussian_two_points() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let g = gram_matrix(&k, &[vec![0.0], vec![1.0]]).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g[(1, 1)], 1.0);
        assert!((g[(0, 1)] - e).abs() < 1e-15);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }

    #[test]
    fn gram_empty_rejected() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(gram_matrix::<f64>(&k, &[]).is_err());
        assert!(cross_vector::<f64>(&k, &[], &[0.0]).is_err());
    }

    #[test]
    fn cross_vector_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let pts = vec![vec![0.2, 0.1], vec![1.0, 1.0]];
        assert_eq!(cross_vector(&g, &pts, &[0.2, 0.1]).unwrap()[0], 1.0);

        let lin = KernelSpec::linear(9.0).unwrap();
        assert_eq!(cross_vector(&lin, &[vec![2.0]], &[3.0]).unwrap(), vec![6.0]);

        let g2 = KernelSpec::gaussian(2.0).unwrap();
        let v = cross_vector(&g2, &[vec![0.0]], &[0.5]).unwrap();
        assert!((v[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn f32_kernel() {
        let k = KernelSpec::<f32>::gaussian(1.0).unwrap();
        let v = k.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - (-1.0f32).exp()).abs() < 1e-7);
    }
}
