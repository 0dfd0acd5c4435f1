//! Comparison policies: per-arm kernel UCB and weighted linear least squares
//! (with or without a ridge term).

use crate::error::{Error, Result};
use crate::estimator::ArmHistory;
use crate::kernels::KernelSpec;
use crate::linalg::{dot, solve_spd_with_jitter, symmetric_pinv_solve, Matrix};
use crate::policy::argmax;
use crate::scalar::Scalar;

/// Relative singular-value cutoff of the unregularized WLS pseudo-inverse.
pub const WLS_PINV_RTOL: f64 = 1e-10;

#[derive(Clone, Debug, Default)]
struct UcbArm<T> {
    contexts: Vec<Vec<T>>,
    /// Rows of the lower Cholesky factor of `K + λI`.
    chol: Vec<Vec<T>>,
    /// `L⁻¹ y`
    whitened: Vec<T>,
}

/// Kernel UCB with one independent kernel ridge model per arm, fit on the
/// arm's own unweighted history with a time-constant λ.
///
/// `score(x) = μ̂(x) + τ σ̂(x)`, with `μ̂(x) = k̄ᵀ(K+λI)⁻¹y` and
/// `σ̂²(x) = max(0, k(x,x) − k̄ᵀ(K+λI)⁻¹k̄)`.
#[derive(Clone, Debug)]
pub struct KernelUcb<T> {
    kernel: KernelSpec<T>,
    lambda: T,
    tau: T,
    arms: Vec<UcbArm<T>>,
}

impl<T: Scalar> KernelUcb<T> {
    pub fn new(kernel: KernelSpec<T>, lambda: T, tau: T, n_arms: usize) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(Error::invalid(format!("UCB lambda must be > 0, got {lambda}")));
        }
        if !(tau >= T::zero()) {
            return Err(Error::invalid(format!("UCB tau must be >= 0, got {tau}")));
        }
        if n_arms == 0 {
            return Err(Error::invalid("UCB needs at least one arm"));
        }
        Ok(Self {
            kernel,
            lambda,
            tau,
            arms: vec![
                UcbArm {
                    contexts: Vec::new(),
                    chol: Vec::new(),
                    whitened: Vec::new(),
                };
                n_arms
            ],
        })
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn n_observations(&self, arm: usize) -> usize {
        self.arms[arm].contexts.len()
    }

    /// Appends one observation and extends the arm's factor by a row.
    pub fn observe(&mut self, arm: usize, x: Vec<T>, y: T) -> Result<()> {
        if arm >= self.arms.len() {
            return Err(Error::invalid(format!("arm {arm} out of range")));
        }
        let kernel = self.kernel;
        let a = &mut self.arms[arm];
        if let Some(first) = a.contexts.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        let k: Vec<T> = a.contexts.iter().map(|c| kernel.eval_unchecked(c, &x)).collect();
        let l = lower_solve_rows(&a.chol, &k);
        let d2 = kernel.eval_unchecked(&x, &x) + self.lambda - dot(&l, &l);
        // The Schur complement is ≥ λ in exact arithmetic.
        let d = d2.max(self.lambda * T::epsilon()).sqrt();
        let q = (y - dot(&l, &a.whitened)) / d;
        let mut row = l;
        row.push(d);
        a.chol.push(row);
        a.whitened.push(q);
        a.contexts.push(x);
        Ok(())
    }

    /// Posterior-style mean and variance `(μ̂(x), σ̂²(x))` of one arm.
    pub fn mean_and_variance(&self, arm: usize, x: &[T]) -> Result<(T, T)> {
        let a = self
            .arms
            .get(arm)
            .ok_or_else(|| Error::invalid(format!("arm {arm} out of range")))?;
        if a.contexts.is_empty() {
            return Err(Error::State(format!("arm {arm} has no observations")));
        }
        if a.contexts[0].len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: a.contexts[0].len(),
                got: x.len(),
            });
        }
        let k: Vec<T> = a.contexts.iter().map(|c| self.kernel.eval_unchecked(c, x)).collect();
        let v = lower_solve_rows(&a.chol, &k);
        let mean = dot(&v, &a.whitened);
        let var = (self.kernel.eval_unchecked(x, x) - dot(&v, &v)).max(T::zero());
        Ok((mean, var))
    }

    pub fn ucb_score(&self, arm: usize, x: &[T]) -> Result<T> {
        let (m, v) = self.mean_and_variance(arm, x)?;
        Ok(m + self.tau * v.sqrt())
    }

    /// Arm with the highest score; ties go to the lowest index.
    pub fn ucb_select(&self, x: &[T]) -> Result<usize> {
        let scores = (0..self.arms.len())
            .map(|a| self.ucb_score(a, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax(&scores))
    }
}

fn lower_solve_rows<T: Scalar>(rows: &[Vec<T>], b: &[T]) -> Vec<T> {
    let mut x: Vec<T> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let s = b[i] - dot(&row[..i], &x[..i]);
        x.push(s / row[i]);
    }
    x
}

fn weighted_moments<T: Scalar>(history: &ArmHistory<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let d = history
        .contexts()
        .first()
        .ok_or_else(|| Error::State("weighted least squares needs an observation".into()))?
        .len();
    let mut xtwx = Matrix::zeros(d, d);
    let mut xtwy = vec![T::zero(); d];
    for ((x, &y), &w) in history
        .contexts()
        .iter()
        .zip(history.rewards())
        .zip(history.weights())
    {
        accumulate(&mut xtwx, &mut xtwy, x, y, w);
    }
    Ok((xtwx, xtwy))
}

fn accumulate<T: Scalar>(xtwx: &mut Matrix<T>, xtwy: &mut [T], x: &[T], y: T, w: T) {
    let d = x.len();
    for i in 0..d {
        let wxi = w * x[i];
        for j in 0..d {
            xtwx[(i, j)] = xtwx[(i, j)] + wxi * x[j];
        }
        xtwy[i] = xtwy[i] + wxi * y;
    }
}

/// Unregularized weighted least squares `θ = pinv(XᵀWX) XᵀWY`, with
/// singular values below `1e-10 ×` the largest treated as zero.
pub fn wls_fit<T: Scalar>(history: &ArmHistory<T>) -> Result<Vec<T>> {
    let (xtwx, xtwy) = weighted_moments(history)?;
    symmetric_pinv_solve(&xtwx, &xtwy, T::lit(WLS_PINV_RTOL))
}

/// Primal weighted ridge `θ = ((1/t)XᵀWX + λI)⁻¹ (1/t)XᵀWY`.
pub fn weighted_ridge_fit<T: Scalar>(history: &ArmHistory<T>, t: usize, lambda: T) -> Result<Vec<T>> {
    let (xtwx, xtwy) = weighted_moments(history)?;
    ridge_solve(xtwx, &xtwy, t, lambda)
}

fn ridge_solve<T: Scalar>(mut xtwx: Matrix<T>, xtwy: &[T], t: usize, lambda: T) -> Result<Vec<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::invalid(format!("ridge lambda must be > 0, got {lambda}")));
    }
    let inv_t = T::one() / T::from_usize_lossy(t);
    let n = xtwx.rows();
    for i in 0..n {
        for j in 0..n {
            xtwx[(i, j)] = xtwx[(i, j)] * inv_t;
        }
    }
    xtwx.add_diagonal(lambda);
    let rhs: Vec<T> = xtwy.iter().map(|&v| v * inv_t).collect();
    Ok(solve_spd_with_jitter(&xtwx, &rhs)?.x)
}

/// Per-arm weighted linear models with running moment sums.
#[derive(Clone, Debug)]
pub struct WeightedLinear<T> {
    histories: Vec<ArmHistory<T>>,
    moments: Vec<Option<(Matrix<T>, Vec<T>)>>,
    coefficients: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> WeightedLinear<T> {
    pub fn new(n_arms: usize) -> Self {
        Self {
            histories: vec![ArmHistory::new(); n_arms],
            moments: vec![None; n_arms],
            coefficients: vec![None; n_arms],
        }
    }

    pub fn history(&self, arm: usize) -> &ArmHistory<T> {
        &self.histories[arm]
    }

    pub fn coefficients(&self, arm: usize) -> Option<&[T]> {
        self.coefficients[arm].as_deref()
    }

    pub fn record_observation(
        &mut self,
        arm: usize,
        x: Vec<T>,
        y: T,
        propensity: T,
        t: usize,
    ) -> Result<()> {
        if arm >= self.histories.len() {
            return Err(Error::invalid(format!("arm {arm} out of range")));
        }
        let d = x.len();
        let (xtwx, xtwy) = self.moments[arm].get_or_insert_with(|| (Matrix::zeros(d, d), vec![T::zero(); d]));
        if xtwy.len() != d {
            return Err(Error::DimensionMismatch {
                expected: xtwy.len(),
                got: d,
            });
        }
        accumulate(xtwx, xtwy, &x, y, T::one() / propensity);
        self.histories[arm].record(x, y, propensity, t)
    }

    /// Refits one arm: ridge if `lambda` is given, pseudo-inverse otherwise.
    pub fn fit_arm(&mut self, arm: usize, t: usize, lambda: Option<T>) -> Result<&[T]> {
        let (xtwx, xtwy) = self.moments[arm]
            .as_ref()
            .ok_or_else(|| Error::State(format!("arm {arm} has no observations")))?;
        let theta = match lambda {
            Some(l) => ridge_solve(xtwx.clone(), xtwy, t, l)?,
            None => symmetric_pinv_solve(xtwx, xtwy, T::lit(WLS_PINV_RTOL))?,
        };
        self.coefficients[arm] = Some(theta);
        Ok(self.coefficients[arm].as_deref().expect("just stored"))
    }

    /// `θᵀx`, or zero for an arm that has never been fitted.
    pub fn predict_or_zero(&self, arm: usize, x: &[T]) -> T {
        self.coefficients[arm]
            .as_ref()
            .map_or(T::zero(), |theta| dot(theta, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ucb_single_point_hand_value() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut u = KernelUcb::new(k, 1.0, 2.0, 1).unwrap();
        u.observe(0, vec![0.3], 0.0).unwrap();
        let (m, v): (f64, f64) = u.mean_and_variance(0, &[0.3]).unwrap();
        assert!(m.abs() < 1e-15);
        assert!((v - 0.5).abs() < 1e-15);
        assert!((u.ucb_score(0, &[0.3]).unwrap() - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ucb_zero_tau_is_mean() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut u = KernelUcb::new(k, 0.5, 0.0, 1).unwrap();
        u.observe(0, vec![0.0], 1.0).unwrap();
        u.observe(0, vec![0.5], 2.0).unwrap();
        let (m, _) = u.mean_and_variance(0, &[0.2]).unwrap();
        assert_eq!(u.ucb_score(0, &[0.2]).unwrap(), m);
    }

    #[test]
    fn ucb_empty_arm_is_state_error() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let u = KernelUcb::new(k, 0.5, 1.0, 2).unwrap();
        assert!(matches!(u.ucb_score(0, &[0.0]), Err(Error::State(_))));
    }

    #[test]
    fn ucb_equal_histories_pick_first() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut u = KernelUcb::new(k, 0.5, 1.0, 2).unwrap();
        for a in 0..2 {
            u.observe(a, vec![0.1], 1.0).unwrap();
        }
        assert_eq!(u.ucb_select(&[0.4]).unwrap(), 0);
        u.observe(1, vec![0.4], 5.0).unwrap();
        assert_eq!(u.ucb_select(&[0.4]).unwrap(), 1);
    }

    #[test]
    fn wls_single_observation() {
        let mut h = ArmHistory::new();
        h.record(vec![1.0], 3.0, 1.0, 1).unwrap();
        let th: Vec<f64> = wls_fit(&h).unwrap();
        assert!((th[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn running_moments_match_history_fit() {
        let mut wl = WeightedLinear::new(1);
        let pts = [([1.0, 0.2], 0.5, 0.7), ([0.3, -1.0], 1.5, 0.2), ([-0.5, 0.4], -0.2, 0.9)];
        for (s, (x, y, p)) in pts.iter().enumerate() {
            wl.record_observation(0, x.to_vec(), *y, *p, s + 1).unwrap();
        }
        let a = wl.fit_arm(0, 3, None).unwrap().to_vec();
        let b = wls_fit(wl.history(0)).unwrap();
        assert_eq!(a, b);
        let c = wl.fit_arm(0, 5, Some(0.1)).unwrap().to_vec();
        let d = weighted_ridge_fit(wl.history(0), 5, 0.1).unwrap();
        assert_eq!(c, d);
    }
}
