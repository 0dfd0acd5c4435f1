//! Kernel ε-greedy contextual bandits.
//!
//! The numerical core ([`kernels`], [`estimator`], [`policy`], [`baselines`],
//! [`linalg`]) is generic over a [`Scalar`] (`f32` or `f64`). Simulation,
//! experiment orchestration and IO work in `f64`; the aliases below name the
//! concrete types they use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod environments;
pub mod estimator;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod policy;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Kernel = kernels::KernelSpec<f64>;
pub type Estimator = estimator::IpwkrEstimator<f64>;
pub type History = estimator::ArmHistory<f64>;
pub type Fit = estimator::ArmFit<f64>;
pub type Decision = policy::PolicyDecision<f64>;
pub type Schedule = policy::ScheduleSpec<f64>;
pub type EpsilonSchedule = policy::EpsilonSchedule<f64>;
pub type LambdaSchedule = policy::LambdaSchedule<f64>;
pub type Ucb = baselines::KernelUcb<f64>;
pub type Wls = baselines::WeightedLinear<f64>;

pub type Config = harness::ExperimentConfig;
pub type Trace = harness::RegretTrace;

pub type KernelF32 = kernels::KernelSpec<f32>;
pub type EstimatorF32 = estimator::IpwkrEstimator<f32>;
