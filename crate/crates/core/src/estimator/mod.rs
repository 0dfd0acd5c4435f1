//! Online inverse-probability-weighted kernel ridge (IPWKR) estimation.
//!
//! For arm `i` at global step `t` the fitted mean-reward function is
//!
//! ```text
//! f̂_i(x) = k̄(x)ᵀ (Λ_i K_t + t λ I)⁻¹ Λ_i Y_t
//! ```
//!
//! where `Λ_i` is diagonal with `w_s = 1{a_s = i} / P(a_s = i | past, x_s)`.
//! Rows with `w_s = 0` force the matching coefficient to zero, so only the
//! arm's own support set `S` matters and the coefficients solve the reduced,
//! symmetric positive-definite system
//!
//! ```text
//! (K_SS + t λ W_S⁻¹) z = y_S .
//! ```
//!
//! (Row `s ∈ S` of the full system reads `w_s (K z)_s + tλ z_s = w_s y_s`;
//! dividing by `w_s` gives the reduced row.)
//!
//! `t` is the global step count, not the number of pulls of the arm.

mod growing;

pub use growing::GrowingFactor;

use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg::{solve_spd_with_jitter, symmetric_pinv_solve, Matrix};
use crate::scalar::Scalar;

/// Weighted observation log of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmHistory<T> {
    contexts: Vec<Vec<T>>,
    rewards: Vec<T>,
    weights: Vec<T>,
    global_times: Vec<usize>,
}

impl<T: Scalar> Default for ArmHistory<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ArmHistory<T> {
    pub fn new() -> Self {
        Self {
            contexts: Vec::new(),
            rewards: Vec::new(),
            weights: Vec::new(),
            global_times: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn contexts(&self) -> &[Vec<T>] {
        &self.contexts
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn global_times(&self) -> &[usize] {
        &self.global_times
    }

    /// Appends `(x, y)` observed at step `t` with weight `1 / propensity`.
    pub fn record(&mut self, x: Vec<T>, y: T, propensity: T, t: usize) -> Result<()> {
        if !(propensity > T::zero() && propensity <= T::one()) {
            return Err(Error::invalid(format!(
                "propensity must lie in (0, 1], got {propensity}"
            )));
        }
        if let Some(&last) = self.global_times.last() {
            if t <= last {
                return Err(Error::invalid(format!(
                    "global time {t} not after previous observation at {last}"
                )));
            }
        }
        if let Some(first) = self.contexts.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        self.contexts.push(x);
        self.rewards.push(y);
        self.weights.push(T::one() / propensity);
        self.global_times.push(t);
        Ok(())
    }
}

/// Dual coefficients of one arm's fit.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmFit<T> {
    /// One coefficient per observation in the arm's history at fit time.
    pub dual_coeffs: Vec<T>,
    pub fitted_lambda: T,
    pub fitted_t: usize,
    /// Diagonal jitter that the factorization needed (zero normally).
    pub jitter: T,
}

/// How the reduced system is solved on a from-scratch refit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FitMethod {
    #[default]
    Cholesky,
    /// Eigen-decomposition pseudo-inverse; slower, kept for cross-checks.
    Spectral,
}

/// Refit-from-scratch solve of the reduced system for one arm.
pub fn fit<T: Scalar>(
    kernel: &KernelSpec<T>,
    history: &ArmHistory<T>,
    t: usize,
    lambda: T,
    method: FitMethod,
) -> Result<ArmFit<T>> {
    check_fit_args(history, t, lambda)?;
    let mut system = gram_matrix(kernel, history.contexts())?;
    let c = T::from_usize_lossy(t) * lambda;
    for (i, &w) in history.weights().iter().enumerate() {
        system[(i, i)] = system[(i, i)] + c / w;
    }
    let (dual_coeffs, jitter) = match method {
        FitMethod::Cholesky => {
            let sol = solve_spd_with_jitter(&system, history.rewards())?;
            (sol.x, sol.jitter)
        }
        FitMethod::Spectral => (
            symmetric_pinv_solve(&system, history.rewards(), T::epsilon())?,
            T::zero(),
        ),
    };
    Ok(ArmFit {
        dual_coeffs,
        fitted_lambda: lambda,
        fitted_t: t,
        jitter,
    })
}

fn check_fit_args<T: Scalar>(history: &ArmHistory<T>, t: usize, lambda: T) -> Result<()> {
    if history.is_empty() {
        return Err(Error::State("cannot fit an arm with no observations".into()));
    }
    if t < history.len() {
        return Err(Error::invalid(format!(
            "global step {t} is smaller than the arm's {} observations",
            history.len()
        )));
    }
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

/// `Σ_ℓ k(x_ℓ, x) z_ℓ` over the support the fit was computed on.
pub fn predict<T: Scalar>(
    kernel: &KernelSpec<T>,
    fit: &ArmFit<T>,
    history: &ArmHistory<T>,
    x: &[T],
) -> Result<T> {
    let n = fit.dual_coeffs.len();
    if history.len() < n {
        return Err(Error::State(format!(
            "fit has {n} coefficients but history only {} observations",
            history.len()
        )));
    }
    let mut acc = T::zero();
    for (xl, &z) in history.contexts()[..n].iter().zip(&fit.dual_coeffs) {
        acc = acc + kernel.eval(xl, x)? * z;
    }
    Ok(acc)
}

/// `sqrt(aᵀ G a)` for the expansion `Σ_m a_m k(·, u_m)`.
pub fn rkhs_norm<T: Scalar>(kernel: &KernelSpec<T>, coeffs: &[T], points: &[Vec<T>]) -> Result<T> {
    if coeffs.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: coeffs.len(),
        });
    }
    if points.is_empty() {
        return Ok(T::zero());
    }
    let g = gram_matrix(kernel, points)?;
    let ga = g.mul_vec(coeffs);
    let sq: T = coeffs.iter().zip(&ga).map(|(&a, &b)| a * b).sum();
    Ok(sq.max(T::zero()).sqrt())
}

/// `‖f̂ − f‖_H` where `f = Σ_j c_j k(·, z_j)`; a missing fit counts as `f̂ = 0`.
pub fn rkhs_error_norm<T: Scalar>(
    kernel: &KernelSpec<T>,
    fit: Option<&ArmFit<T>>,
    history: &ArmHistory<T>,
    target_coeffs: &[T],
    target_points: &[Vec<T>],
) -> Result<T> {
    if target_coeffs.len() != target_points.len() {
        return Err(Error::DimensionMismatch {
            expected: target_points.len(),
            got: target_coeffs.len(),
        });
    }
    let mut coeffs = Vec::new();
    let mut points = Vec::new();
    if let Some(fit) = fit {
        let n = fit.dual_coeffs.len();
        if history.len() < n {
            return Err(Error::State("fit longer than history".into()));
        }
        coeffs.extend_from_slice(&fit.dual_coeffs);
        points.extend(history.contexts()[..n].iter().cloned());
    }
    coeffs.extend(target_coeffs.iter().map(|&c| -c));
    points.extend(target_points.iter().cloned());
    if let (Some(a), Some(b)) = (points.first(), points.last()) {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
    }
    rkhs_norm(kernel, &coeffs, &points)
}

/// Strategy for refitting the pulled arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Solver {
    /// Rebuild and factor the reduced system at every fit.
    Direct(FitMethod),
    /// Growing low-rank factorization; falls back to `Direct(Cholesky)` when
    /// the basis would exceed `max_rank`.
    Incremental { tol: f64, max_rank: usize },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Incremental {
            tol: 1e-12,
            max_rank: 400,
        }
    }
}

/// Per-arm histories and fits for `L` arms sharing one kernel.
#[derive(Clone, Debug)]
pub struct IpwkrEstimator<T> {
    kernel: KernelSpec<T>,
    solver: Solver,
    histories: Vec<ArmHistory<T>>,
    fits: Vec<Option<ArmFit<T>>>,
    factors: Vec<Option<GrowingFactor<T>>>,
}

impl<T: Scalar> IpwkrEstimator<T> {
    pub fn new(kernel: KernelSpec<T>, n_arms: usize, solver: Solver) -> Self {
        let factors = (0..n_arms)
            .map(|_| match solver {
                Solver::Incremental { tol, max_rank } => {
                    Some(GrowingFactor::new(kernel, T::lit(tol), max_rank))
                }
                Solver::Direct(_) => None,
            })
            .collect();
        Self {
            kernel,
            solver,
            histories: vec![ArmHistory::new(); n_arms],
            fits: vec![None; n_arms],
            factors,
        }
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn n_arms(&self) -> usize {
        self.histories.len()
    }

    pub fn history(&self, arm: usize) -> &ArmHistory<T> {
        &self.histories[arm]
    }

    pub fn fit_state(&self, arm: usize) -> Option<&ArmFit<T>> {
        self.fits[arm].as_ref()
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.n_arms() {
            return Err(Error::invalid(format!(
                "arm {arm} out of range for {} arms",
                self.n_arms()
            )));
        }
        Ok(())
    }

    /// Appends to `arm`'s history only; fits are untouched until
    /// [`fit_arm`](Self::fit_arm).
    pub fn record_observation(
        &mut self,
        arm: usize,
        x: Vec<T>,
        y: T,
        propensity: T,
        t: usize,
    ) -> Result<()> {
        self.check_arm(arm)?;
        let h = &mut self.histories[arm];
        h.record(x, y, propensity, t)?;
        if let Some(f) = self.factors[arm].as_mut() {
            f.append(h.contexts(), h.weights(), h.rewards());
        }
        Ok(())
    }

    pub fn fit_arm(&mut self, arm: usize, t: usize, lambda: T) -> Result<&ArmFit<T>> {
        self.check_arm(arm)?;
        let history = &self.histories[arm];
        check_fit_args(history, t, lambda)?;
        let c = T::from_usize_lossy(t) * lambda;
        let growing = match self.factors[arm].as_ref() {
            Some(f) => f
                .solve(history.weights(), history.rewards(), c)?
                .filter(|z| z.iter().all(|v| v.is_finite())),
            None => None,
        };
        let new_fit = match growing {
            Some(dual_coeffs) => ArmFit {
                dual_coeffs,
                fitted_lambda: lambda,
                fitted_t: t,
                jitter: T::zero(),
            },
            None => {
                let method = match self.solver {
                    Solver::Direct(m) => m,
                    Solver::Incremental { .. } => FitMethod::Cholesky,
                };
                fit(&self.kernel, history, t, lambda, method)?
            }
        };
        self.fits[arm] = Some(new_fit);
        Ok(self.fits[arm].as_ref().expect("just stored"))
    }

    pub fn predict(&self, arm: usize, x: &[T]) -> Result<T> {
        self.check_arm(arm)?;
        let f = self.fits[arm]
            .as_ref()
            .ok_or_else(|| Error::State(format!("arm {arm} has not been fitted")))?;
        predict(&self.kernel, f, &self.histories[arm], x)
    }

    /// Prediction, or zero for an arm that has never been fitted.
    pub fn predict_or_zero(&self, arm: usize, x: &[T]) -> Result<T> {
        self.check_arm(arm)?;
        match self.fits[arm].as_ref() {
            Some(f) => predict(&self.kernel, f, &self.histories[arm], x),
            None => Ok(T::zero()),
        }
    }

    pub fn rkhs_error_norm(
        &self,
        arm: usize,
        target_coeffs: &[T],
        target_points: &[Vec<T>],
    ) -> Result<T> {
        self.check_arm(arm)?;
        rkhs_error_norm(
            &self.kernel,
            self.fits[arm].as_ref(),
            &self.histories[arm],
            target_coeffs,
            target_points,
        )
    }

    /// Current rank of `arm`'s growing factor, if one is maintained and not
    /// saturated.
    pub fn factor_rank(&self, arm: usize) -> Option<usize> {
        self.factors[arm]
            .as_ref()
            .filter(|f| !f.is_saturated())
            .map(GrowingFactor::rank)
    }
}

/// Full `t × t` coefficient vector `(Λ K + tλ I)⁻¹ Λ Y` is the reduced
/// solution scattered onto the arm's time indices; this builds the weighted
/// system matrix `Λ K + tλ I` for callers that want it explicitly.
pub fn full_system_matrix<T: Scalar>(
    kernel: &KernelSpec<T>,
    all_contexts: &[Vec<T>],
    weights: &[T],
    t: usize,
    lambda: T,
) -> Result<Matrix<T>> {
    if weights.len() != all_contexts.len() {
        return Err(Error::DimensionMismatch {
            expected: all_contexts.len(),
            got: weights.len(),
        });
    }
    let k = gram_matrix(kernel, all_contexts)?;
    let n = all_contexts.len();
    let c = T::from_usize_lossy(t) * lambda;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = weights[i] * k[(i, j)];
        }
        m[(i, i)] = m[(i, i)] + c;
    }
    Ok(m)
}
