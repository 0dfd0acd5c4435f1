//! ε-greedy arm selection and the exploration / regularization schedules.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDecision<T> {
    pub chosen_arm: usize,
    pub greedy_arm: usize,
    /// Selection probability of every arm given the history and context.
    pub propensities: Vec<T>,
    pub explored: bool,
}

impl<T: Scalar> PolicyDecision<T> {
    pub fn chosen_propensity(&self) -> T {
        self.propensities[self.chosen_arm]
    }
}

/// Index of the largest estimate; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy arm with probability `1 - eps`, otherwise a uniformly chosen
/// non-greedy arm.
///
/// Exactly one uniform draw decides exploration; an exploring step takes one
/// more draw over the `L - 1` other arms, mapped by skipping the greedy index.
pub fn select_arm<T: Scalar, R: Rng + ?Sized>(
    estimates: &[T],
    eps: T,
    rng: &mut R,
) -> Result<PolicyDecision<T>> {
    let n_arms = estimates.len();
    if n_arms < 2 {
        return Err(Error::invalid("epsilon-greedy needs at least two arms"));
    }
    let max_eps = T::from_usize_lossy(n_arms - 1) / T::from_usize_lossy(n_arms);
    if !(eps >= T::zero() && eps <= max_eps) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [0, {max_eps}], got {eps}"
        )));
    }
    let greedy_arm = argmax(estimates);
    let other = eps / T::from_usize_lossy(n_arms - 1);
    let mut propensities = vec![other; n_arms];
    propensities[greedy_arm] = T::one() - eps;

    let u: f64 = rng.random();
    let explored = u < eps.as_f64();
    let chosen_arm = if explored {
        let j = rng.random_range(0..n_arms - 1);
        if j >= greedy_arm {
            j + 1
        } else {
            j
        }
    } else {
        greedy_arm
    };
    Ok(PolicyDecision {
        chosen_arm,
        greedy_arm,
        propensities,
        explored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonSchedule<T> {
    /// `scale · t^(-beta)`
    PowerLaw { beta: T, scale: T },
    /// `max(t^(-1/2) ln(t) / 10, 0.02)`
    PaperSim,
    Constant(T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSchedule<T> {
    /// `scale · [(1/t²) Σ 1/ε_s]^(1/2)`
    FiniteDim { scale: T },
    /// `scale · [(1/(δ t²)) Σ 1/ε_s]^(α / (2γα + α + 1))`
    InfiniteDim {
        alpha: T,
        source: T,
        delta: T,
        scale: T,
    },
    Fixed(T),
    /// `scale · t^(-power) / sqrt(ln t)`; defined for `t ≥ 2`.
    LogPower { power: T, scale: T },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec<T> {
    pub epsilon: EpsilonSchedule<T>,
    pub lambda: LambdaSchedule<T>,
}

fn positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be > 0, got {v}")))
    }
}

impl<T: Scalar> EpsilonSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSchedule::PowerLaw { beta, scale } => {
                if !(beta > T::zero() && beta < T::one()) {
                    return Err(Error::invalid(format!("beta must lie in (0, 1), got {beta}")));
                }
                positive("epsilon scale", scale)
            }
            EpsilonSchedule::PaperSim => Ok(()),
            EpsilonSchedule::Constant(e) => {
                if e >= T::zero() && e < T::one() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("constant epsilon must lie in [0, 1), got {e}")))
                }
            }
        }
    }

    /// Unclamped schedule value.
    pub fn raw(&self, t: usize) -> T {
        let tf = T::from_usize_lossy(t.max(1));
        match *self {
            EpsilonSchedule::PowerLaw { beta, scale } => scale * tf.powf(-beta),
            EpsilonSchedule::PaperSim => {
                let v = tf.ln() / (tf.sqrt() * T::lit(10.0));
                v.max(T::lit(0.02))
            }
            EpsilonSchedule::Constant(e) => e,
        }
    }
}

/// Exploration probability at step `t`, clamped to at most `(L-1)/L`.
pub fn epsilon_at<T: Scalar>(spec: &EpsilonSchedule<T>, t: usize, n_arms: usize) -> T {
    let cap = T::from_usize_lossy(n_arms.saturating_sub(1)) / T::from_usize_lossy(n_arms.max(1));
    spec.raw(t).min(cap)
}

impl<T: Scalar> LambdaSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaSchedule::FiniteDim { scale } => positive("lambda scale", scale),
            LambdaSchedule::InfiniteDim {
                alpha,
                source,
                delta,
                scale,
            } => {
                if !(alpha > T::one()) {
                    return Err(Error::invalid(format!("alpha must be > 1, got {alpha}")));
                }
                if !(source > T::zero() && source <= T::lit(0.5)) {
                    return Err(Error::invalid(format!(
                        "source exponent must lie in (0, 1/2], got {source}"
                    )));
                }
                if !(delta > T::zero() && delta < T::one()) {
                    return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
                }
                positive("lambda scale", scale)
            }
            LambdaSchedule::Fixed(l) => positive("lambda", l),
            LambdaSchedule::LogPower { power, scale } => {
                positive("lambda power", power)?;
                positive("lambda scale", scale)
            }
        }
    }

    /// Whether the value depends on the exploration history.
    pub fn uses_epsilon(&self) -> bool {
        matches!(
            self,
            LambdaSchedule::FiniteDim { .. } | LambdaSchedule::InfiniteDim { .. }
        )
    }
}

/// `(1/t²) Σ_{s≤t} 1/ε_s`, the quantity whose `o(1)` decay consistency needs.
pub fn exploration_inner<T: Scalar>(t: usize, inverse_eps_sum: T) -> T {
    let tf = T::from_usize_lossy(t);
    inverse_eps_sum / (tf * tf)
}

/// λ at step `t` given `Σ_{s≤t} 1/ε_s` (ignored by history-free schedules).
pub fn lambda_from_inverse_sum<T: Scalar>(
    spec: &LambdaSchedule<T>,
    t: usize,
    inverse_eps_sum: T,
) -> Result<T> {
    if t == 0 {
        return Err(Error::invalid("lambda schedule needs t >= 1"));
    }
    let tf = T::from_usize_lossy(t);
    match *spec {
        LambdaSchedule::FiniteDim { scale } => {
            Ok(scale * exploration_inner(t, inverse_eps_sum).sqrt())
        }
        LambdaSchedule::InfiniteDim {
            alpha,
            source,
            delta,
            scale,
        } => {
            let exponent = alpha / (T::lit(2.0) * source * alpha + alpha + T::one());
            Ok(scale * (exploration_inner(t, inverse_eps_sum) / delta).powf(exponent))
        }
        LambdaSchedule::Fixed(l) => Ok(l),
        LambdaSchedule::LogPower { power, scale } => {
            if t < 2 {
                return Err(Error::invalid("log-power lambda schedule needs t >= 2"));
            }
            Ok(scale * tf.powf(-power) / tf.ln().sqrt())
        }
    }
}

/// λ at step `t` from the first `t` exploration probabilities.
pub fn lambda_at<T: Scalar>(spec: &LambdaSchedule<T>, t: usize, eps_history: &[T]) -> Result<T> {
    if !spec.uses_epsilon() {
        return lambda_from_inverse_sum(spec, t, T::zero());
    }
    if eps_history.len() < t {
        return Err(Error::invalid(format!(
            "epsilon history has {} entries, need {t}",
            eps_history.len()
        )));
    }
    let mut inv = T::zero();
    for &e in &eps_history[..t] {
        if !(e > T::zero()) {
            return Err(Error::invalid(format!(
                "epsilon history must be strictly positive, found {e}"
            )));
        }
        inv = inv + T::one() / e;
    }
    lambda_from_inverse_sum(spec, t, inv)
}
