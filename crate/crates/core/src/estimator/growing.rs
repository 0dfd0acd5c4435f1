//! Growing low-rank factorization of one arm's Gram matrix.
//!
//! Contexts are appended one at a time. Each new point is projected onto the
//! span of the current basis points. If the residual `k(x,x) - ||g||^2`
//! exceeds `tol * k(x,x)`, the whole factor is recomputed by greedy pivoted
//! Cholesky over all points seen so far, which keeps the pivots in
//! decreasing order. The result is `K_SS ≈ G Gᵀ` with a PSD remainder whose
//! diagonal is below the tolerance.
//!
//! The reduced system `(K_SS + c W⁻¹) z = y` (with `c = t·λ_t`) is then solved
//! through the Woodbury identity:
//!
//! ```text
//! A = Gᵀ W G,  b = Gᵀ W y,  u = (c I + A)⁻¹ b,  z = (W / c)(y - G u)
//! ```
//!
//! `A` and `b` are maintained incrementally, so a refit with a new `c` costs
//! `O(n r + r³)` instead of `O(n³)`. Once the rank would exceed `max_rank`
//! (or a kernel value is not finite) the factor reports saturation and
//! callers switch to the direct solve.

use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky, cholesky_solve, dot, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GrowingFactor<T> {
    kernel: KernelSpec<T>,
    tol: T,
    max_rank: usize,
    /// Row `i` holds the coordinates of observation `i` in the basis.
    rows: Vec<Vec<T>>,
    /// Lower Cholesky factor of the basis Gram, stored by rows.
    basis_chol: Vec<Vec<T>>,
    basis_points: Vec<Vec<T>>,
    weighted_gram: Vec<Vec<T>>,
    weighted_target: Vec<T>,
    saturated: bool,
}

impl<T: Scalar> GrowingFactor<T> {
    pub fn new(kernel: KernelSpec<T>, tol: T, max_rank: usize) -> Self {
        Self {
            kernel,
            tol: tol.max(T::epsilon() * T::lit(100.0)),
            max_rank,
            rows: Vec::new(),
            basis_chol: Vec::new(),
            basis_points: Vec::new(),
            weighted_gram: Vec::new(),
            weighted_target: Vec::new(),
            saturated: false,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis_points.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Incorporates the last entry of `contexts` (all earlier entries must
    /// already be in the factor).
    pub fn append(&mut self, contexts: &[Vec<T>], weights: &[T], rewards: &[T]) {
        if self.saturated {
            return;
        }
        let n = contexts.len();
        debug_assert_eq!(n, self.rows.len() + 1);
        let x = &contexts[n - 1];
        let r = self.rank();

        // g = L_B⁻¹ k(B, x)
        let mut g = Vec::with_capacity(r + 1);
        for i in 0..r {
            let kbx = self.kernel.eval_unchecked(&self.basis_points[i], x);
            let s = kbx - dot(&self.basis_chol[i][..i], &g[..i]);
            g.push(s / self.basis_chol[i][i]);
        }
        let kxx = self.kernel.eval_unchecked(x, x);
        let residual = kxx - dot(&g, &g);
        if !residual.is_finite() {
            self.saturate();
            return;
        }

        if residual > self.tol * kxx && residual > T::zero() {
            self.rebuild(contexts, weights, rewards);
            return;
        }

        let w = weights[n - 1];
        let y = rewards[n - 1];
        for (j, &gj) in g.iter().enumerate() {
            let wg = w * gj;
            for (k, &gk) in g.iter().enumerate() {
                self.weighted_gram[j][k] = self.weighted_gram[j][k] + wg * gk;
            }
            self.weighted_target[j] = self.weighted_target[j] + wg * y;
        }
        self.rows.push(g);
    }

    fn saturate(&mut self) {
        self.saturated = true;
        self.rows = Vec::new();
        self.weighted_gram = Vec::new();
        self.weighted_target = Vec::new();
        self.basis_chol = Vec::new();
        self.basis_points = Vec::new();
    }

    /// Greedy pivoted Cholesky over all points: the next basis point is
    /// always the one with the largest remaining residual.
    fn rebuild(&mut self, contexts: &[Vec<T>], weights: &[T], rewards: &[T]) {
        let n = contexts.len();
        let kdiag: Vec<T> = contexts.iter().map(|x| self.kernel.eval_unchecked(x, x)).collect();
        let mut resid = kdiag.clone();
        let mut rows: Vec<Vec<T>> = vec![Vec::new(); n];
        let mut is_pivot = vec![false; n];
        let mut pivots: Vec<usize> = Vec::new();
        loop {
            let mut best: Option<usize> = None;
            for i in 0..n {
                if !is_pivot[i]
                    && resid[i] > self.tol * kdiag[i]
                    && resid[i] > T::zero()
                    && best.is_none_or(|b| resid[i] > resid[b])
                {
                    best = Some(i);
                }
            }
            let Some(p) = best else { break };
            if pivots.len() >= self.max_rank {
                self.saturate();
                return;
            }
            let s = resid[p].sqrt();
            let rp = rows[p].clone();
            for i in 0..n {
                let v = if i == p {
                    s
                } else if is_pivot[i] {
                    T::zero()
                } else {
                    let kip = self.kernel.eval_unchecked(&contexts[i], &contexts[p]);
                    (kip - dot(&rows[i], &rp)) / s
                };
                rows[i].push(v);
                if !is_pivot[i] {
                    resid[i] = resid[i] - v * v;
                }
            }
            resid[p] = T::zero();
            is_pivot[p] = true;
            pivots.push(p);
        }

        let r = pivots.len();
        self.basis_chol = pivots.iter().enumerate().map(|(k, &p)| rows[p][..=k].to_vec()).collect();
        self.basis_points = pivots.iter().map(|&p| contexts[p].clone()).collect();
        self.weighted_gram = vec![vec![T::zero(); r]; r];
        self.weighted_target = vec![T::zero(); r];
        for ((g, &w), &y) in rows.iter().zip(weights).zip(rewards) {
            for (j, &gj) in g.iter().enumerate() {
                let wg = w * gj;
                for (k, &gk) in g.iter().enumerate() {
                    self.weighted_gram[j][k] = self.weighted_gram[j][k] + wg * gk;
                }
                self.weighted_target[j] = self.weighted_target[j] + wg * y;
            }
        }
        self.rows = rows;
    }

    /// Dual coefficients for `(G Gᵀ + c W⁻¹) z = y`, or `None` if the small
    /// system could not be factored (callers fall back to the direct path).
    pub fn solve(&self, weights: &[T], rewards: &[T], c: T) -> Result<Option<Vec<T>>> {
        if self.saturated {
            return Ok(None);
        }
        let r = self.rank();
        let mut m = Matrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                m[(i, j)] = self.weighted_gram[i][j];
            }
        }
        m.add_diagonal(c);
        let u = if r == 0 {
            Vec::new()
        } else {
            match cholesky(&m) {
                Some(l) => cholesky_solve(&l, &self.weighted_target),
                None => return Ok(None),
            }
        };
        let z = self
            .rows
            .iter()
            .zip(weights.iter().zip(rewards))
            .map(|(row, (&w, &y))| w / c * (y - dot(row, &u)))
            .collect();
        Ok(Some(z))
    }
}
