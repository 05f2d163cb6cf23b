//! Inference-aware policy-gradient machinery for Best-of-N sampling.
//!
//! The crate provides unbiased `max@k` / `pass@k` estimators, the on-policy
//! and first-order off-policy Best-of-N reward transforms, the usual advantage
//! baselines, brute-force subset-enumeration oracles for all of them, and a
//! toy softmax-bandit trainer that exercises the transforms inside a clipped
//! GRPO surrogate.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the trainer and the
//! experiment layer use.

pub mod bandit;
pub mod combinatorics;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod offpolicy;
pub mod oracle;
pub mod scalar;
pub mod shaping;
pub mod stats;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type RewardGroupF64 = metrics::RewardGroup<f64>;
pub type RewardGroupF32 = metrics::RewardGroup<f32>;
pub type WeightMatrixF64 = shaping::WeightMatrix<f64>;
pub type PolicyF64 = bandit::CategoricalPolicy<f64>;
pub type PolicyF32 = bandit::CategoricalPolicy<f32>;
pub type BanditEnvF64 = bandit::BanditEnv<f64>;
pub type SampleBatchF64 = bandit::SampleBatch<f64>;
