//! Recurrent predictive state policy networks.
//!
//! A recurrent agent whose state is the predictive state of an RFF-PSR
//! filter, initialized by two-stage regression and trained end to end by
//! backpropagation through time, with VRPG and alternating TRPO updates.
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use.

pub mod agent;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod features;
pub mod gradcore;
pub mod hmm;
pub mod init2sr;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod policy;
pub mod psr;
pub mod scalar;
pub mod seeding;
pub mod trajectory;

pub use error::{Result, RpspError};
pub use scalar::Scalar;
pub use trajectory::Trajectory;

pub type AgentF64 = agent::Agent<f64>;
pub type AgentF32 = agent::Agent<f32>;
pub type PsrParamsF64 = psr::PsrParams<f64>;
pub type PsrParamsF32 = psr::PsrParams<f32>;
pub type PolicyParamsF64 = policy::ReactivePolicyParams<f64>;
pub type PolicyParamsF32 = policy::ReactivePolicyParams<f32>;
pub type TrajectoryF64 = trajectory::Trajectory<f64>;
pub type TrajectoryF32 = trajectory::Trajectory<f32>;
pub type TrainerF64 = optim::Trainer<f64>;
pub type TrainerF32 = optim::Trainer<f32>;
