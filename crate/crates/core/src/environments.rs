//! Synthetic bandit-with-covariates environments.
//!
//! Arms are 0-based in code. Where a reward formula refers to the arm label
//! `a ∈ {1, 2}`, arm index `i` uses `a = i + 1`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::rkhs_norm;
use crate::kernels::KernelSpec;
use crate::linalg::Matrix;

/// Support bound of the truncated normal context distribution.
pub const TRUNC_NORMAL_BOUND: f64 = 10.0;

/// Cells per side of the Setting 2 board over `[-1, 1]²`.
pub const CHESSBOARD_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextDist {
    /// i.i.d. `Uniform(-1, 1)` coordinates.
    Uniform { dim: usize },
    /// i.i.d. standard normal coordinates truncated to `[-10, 10]`.
    TruncNormal { dim: usize },
}

impl ContextDist {
    pub fn dim(&self) -> usize {
        match *self {
            ContextDist::Uniform { dim } | ContextDist::TruncNormal { dim } => dim,
        }
    }

    /// Half-width of the (box) support.
    pub fn bound(&self) -> f64 {
        match self {
            ContextDist::Uniform { .. } => 1.0,
            ContextDist::TruncNormal { .. } => TRUNC_NORMAL_BOUND,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            ContextDist::Uniform { dim } => {
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
            ContextDist::TruncNormal { dim } => (0..dim)
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= TRUNC_NORMAL_BOUND {
                        break z;
                    }
                })
                .collect(),
        }
    }

    /// Per-coordinate variance (the coordinates are independent, zero mean).
    pub fn coordinate_variance(&self) -> f64 {
        match self {
            ContextDist::Uniform { .. } => 1.0 / 3.0,
            ContextDist::TruncNormal { .. } => {
                // Var of N(0,1) truncated to [-b, b]: 1 - 2bφ(b) / (2Φ(b) - 1).
                // For b = 10 the correction is below 1e-20.
                let b = TRUNC_NORMAL_BOUND;
                let phi = (-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt();
                1.0 - 2.0 * b * phi
            }
        }
    }

    /// Analytic second-moment matrix `E[x xᵀ]`.
    pub fn second_moment(&self) -> Matrix<f64> {
        let d = self.dim();
        let mut m = Matrix::identity(d);
        for i in 0..d {
            m[(i, i)] = self.coordinate_variance();
        }
        m
    }
}

/// `f(x) = Σ_j c_j k(z_j, x)`
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub coeffs: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl Expansion {
    pub fn new(coeffs: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: coeffs.len(),
            });
        }
        if coeffs.is_empty() {
            return Err(Error::invalid("kernel expansion must have at least one term"));
        }
        Ok(Self { coeffs, points })
    }

    pub fn eval(&self, kernel: &KernelSpec<f64>, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.points)
            .map(|(&c, z)| c * kernel.eval_unchecked(z, x))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardModel {
    /// `f₁ = sin(πx)`, `f₂ = cos(πx)`
    Setting1,
    /// Chessboard indicators on [`CHESSBOARD_CELLS`]² cells.
    Setting2,
    /// `f_a(x) = max(0, 1 − |a − a*| − ⟨w*, x − x*⟩)`
    Setting3 {
        a_star: usize,
        x_star: Vec<f64>,
        w_star: Vec<f64>,
    },
    /// `f_a(x) = 1{‖x − (a − 0.5)‖₁ < 4} + 0.5·1{‖x − (a − 1)‖₁ < 4}`
    Setting4,
    InRkhs {
        kernel: KernelSpec<f64>,
        expansions: Vec<Expansion>,
    },
    /// Context-independent means.
    Constant(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    n_arms: usize,
    context: ContextDist,
    model: RewardModel,
    noise_sigma: f64,
}

fn check_noise(noise_sigma: f64) -> Result<()> {
    if noise_sigma >= 0.0 && noise_sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )))
    }
}

impl Environment {
    fn build(n_arms: usize, context: ContextDist, model: RewardModel, noise_sigma: f64) -> Result<Self> {
        check_noise(noise_sigma)?;
        if n_arms < 2 {
            return Err(Error::invalid("an environment needs at least two arms"));
        }
        if context.dim() == 0 {
            return Err(Error::invalid("context dimension must be >= 1"));
        }
        Ok(Self {
            n_arms,
            context,
            model,
            noise_sigma,
        })
    }

    pub fn setting1(noise_sigma: f64) -> Result<Self> {
        Self::build(2, ContextDist::Uniform { dim: 1 }, RewardModel::Setting1, noise_sigma)
    }

    pub fn setting2(noise_sigma: f64) -> Result<Self> {
        Self::build(2, ContextDist::Uniform { dim: 2 }, RewardModel::Setting2, noise_sigma)
    }

    pub fn setting3(x_star: Vec<f64>, w_star: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if x_star.len() != w_star.len() {
            return Err(Error::DimensionMismatch {
                expected: x_star.len(),
                got: w_star.len(),
            });
        }
        let dim = x_star.len();
        Self::build(
            2,
            ContextDist::TruncNormal { dim },
            RewardModel::Setting3 {
                a_star: 2,
                x_star,
                w_star,
            },
            noise_sigma,
        )
    }

    /// `x*` and `w*` with coordinates uniform on `[-1, 1]`, drawn from a
    /// stream derived from `seed`.
    pub fn setting3_parameters(seed: u64, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x5e77_1293);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        (x, w)
    }

    pub fn setting4(noise_sigma: f64) -> Result<Self> {
        Self::build(2, ContextDist::TruncNormal { dim: 3 }, RewardModel::Setting4, noise_sigma)
    }

    pub fn constant(means: Vec<f64>, context: ContextDist, noise_sigma: f64) -> Result<Self> {
        Self::build(means.len(), context, RewardModel::Constant(means), noise_sigma)
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn dim(&self) -> usize {
        self.context.dim()
    }

    pub fn context_dist(&self) -> ContextDist {
        self.context
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.context.sample(rng)
    }

    fn check(&self, arm: usize, x: &[f64]) -> Result<()> {
        if arm >= self.n_arms {
            return Err(Error::invalid(format!(
                "arm {arm} out of range for {} arms",
                self.n_arms
            )));
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn mean_reward(&self, arm: usize, x: &[f64]) -> Result<f64> {
        self.check(arm, x)?;
        Ok(self.mean_unchecked(arm, x))
    }

    fn mean_unchecked(&self, arm: usize, x: &[f64]) -> f64 {
        let label = (arm + 1) as f64;
        match &self.model {
            RewardModel::Setting1 => {
                let v = std::f64::consts::PI * x[0];
                if arm == 0 {
                    v.sin()
                } else {
                    v.cos()
                }
            }
            RewardModel::Setting2 => {
                let cell = |v: f64| {
                    let c = ((v + 1.0) * CHESSBOARD_CELLS as f64 / 2.0).floor();
                    c.clamp(0.0, (CHESSBOARD_CELLS - 1) as f64) as usize
                };
                let green = (cell(x[0]) + cell(x[1])) % 2 == 0;
                match (arm, green) {
                    (0, true) | (1, false) => 1.0,
                    _ => 0.0,
                }
            }
            RewardModel::Setting3 {
                a_star,
                x_star,
                w_star,
            } => {
                let shift: f64 = w_star
                    .iter()
                    .zip(x.iter().zip(x_star))
                    .map(|(w, (xi, xs))| w * (xi - xs))
                    .sum();
                (1.0 - (label - *a_star as f64).abs() - shift).max(0.0)
            }
            RewardModel::Setting4 => {
                let l1 = |c: f64| x.iter().map(|xi| (xi - c).abs()).sum::<f64>();
                let a = if l1(label - 0.5) < 4.0 { 1.0 } else { 0.0 };
                let b = if l1(label - 1.0) < 4.0 { 0.5 } else { 0.0 };
                a + b
            }
            RewardModel::InRkhs { kernel, expansions } => expansions[arm].eval(kernel, x),
            RewardModel::Constant(m) => m[arm],
        }
    }

    pub fn mean_rewards(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(0, x)?;
        Ok((0..self.n_arms).map(|a| self.mean_unchecked(a, x)).collect())
    }

    /// Mean reward plus Gaussian noise; one standard normal is drawn per
    /// call, also when `noise_sigma` is zero.
    pub fn sample_reward<R: Rng + ?Sized>(&self, arm: usize, x: &[f64], rng: &mut R) -> Result<f64> {
        let m = self.mean_reward(arm, x)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(m + self.noise_sigma * z)
    }

    /// Best arm and its mean at `x`; ties go to the lowest index.
    pub fn optimal_arm(&self, x: &[f64]) -> Result<(usize, f64)> {
        let means = self.mean_rewards(x)?;
        let best = crate::policy::argmax(&means);
        Ok((best, means[best]))
    }

    /// Exact RKHS norm of arm `arm`'s mean function, for in-RKHS models.
    pub fn rkhs_norm(&self, arm: usize) -> Option<f64> {
        match &self.model {
            RewardModel::InRkhs { kernel, expansions } => {
                let e = expansions.get(arm)?;
                rkhs_norm(kernel, &e.coeffs, &e.points).ok()
            }
            _ => None,
        }
    }
}

/// Environment whose arm means are the given kernel expansions.
pub fn make_inrkhs_environment(
    kernel: KernelSpec<f64>,
    expansions: Vec<Expansion>,
    context: ContextDist,
    noise_sigma: f64,
) -> Result<Environment> {
    if expansions.is_empty() {
        return Err(Error::invalid("need one expansion per arm"));
    }
    for e in &expansions {
        if e.coeffs.is_empty() || e.coeffs.len() != e.points.len() {
            return Err(Error::invalid("malformed kernel expansion"));
        }
        for p in &e.points {
            if p.len() != context.dim() {
                return Err(Error::DimensionMismatch {
                    expected: context.dim(),
                    got: p.len(),
                });
            }
        }
    }
    Environment::build(
        expansions.len(),
        context,
        RewardModel::InRkhs { kernel, expansions },
        noise_sigma,
    )
}
