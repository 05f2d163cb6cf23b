//! Softmax policies over a finite action set and bandit environments with
//! discrete per-arm reward distributions.
//!
//! A completion is a single action, so `E[max@k]` under a policy and its
//! gradient with respect to the logits are exactly computable.
//!
//! Seeding: every outer training step draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with the stream set to the step index (see
//! [`step_rng`]), which makes batches bit-reproducible across platforms and
//! independent between steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RewardGroup;
use crate::scalar::Real;

/// Tolerance on per-arm probability mass.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy<T> {
    logits: Vec<T>,
}

impl<T: Real> CategoricalPolicy<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::InvalidPolicy(format!("need at least 2 actions, got {}", logits.len())));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite logit".into()));
        }
        Ok(Self { logits })
    }

    pub fn uniform(actions: usize) -> Result<Self> {
        Self::new(vec![T::zero(); actions])
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    /// Softmax with max-subtraction.
    pub fn probs(&self) -> Vec<T> {
        let top = self.logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = self.logits.iter().map(|&l| (l - top).exp()).collect();
        let z: T = exps.iter().copied().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn log_probs(&self) -> Vec<T> {
        let top = self.logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = self.logits.iter().map(|&l| (l - top).exp()).sum::<T>().ln() + top;
        self.logits.iter().map(|&l| l - lse).collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<T> {
        self.check_index(action)?;
        Ok(self.log_probs()[action])
    }

    /// Score function `e_action - probs`.
    pub fn logprob_grad(&self, action: usize) -> Result<Vec<T>> {
        self.check_index(action)?;
        let mut g: Vec<T> = self.probs().into_iter().map(|p| -p).collect();
        g[action] += T::one();
        Ok(g)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        let s: T = self
            .probs()
            .into_iter()
            .zip(self.log_probs())
            .filter(|(p, _)| *p > T::zero())
            .map(|(p, lp)| p * lp)
            .sum();
        T::zero() - s
    }

    /// Exact `KL(self || old)`.
    pub fn kl_divergence(&self, old: &Self) -> Result<T> {
        if self.len() != old.len() {
            return Err(Error::LengthMismatch { expected: old.len(), found: self.len() });
        }
        let kl = self
            .probs()
            .into_iter()
            .zip(self.log_probs().into_iter().zip(old.log_probs()))
            .filter(|(p, _)| *p > T::zero())
            .map(|(p, (lp, lq))| p * (lp - lq))
            .sum::<T>();
        Ok(kl.max(T::zero()))
    }

    fn check_index(&self, action: usize) -> Result<()> {
        if action >= self.len() {
            return Err(Error::InvalidIndex { index: action, len: self.len() });
        }
        Ok(())
    }
}

/// One atom of an arm's reward distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub value: T,
    pub prob: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv<T> {
    arms: Vec<Vec<Outcome<T>>>,
    task_id: String,
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_id: Option<String>,
    arms: Vec<Vec<Outcome<f64>>>,
}

pub const BUILTIN_ENVS: [&str; 3] = ["safe-vs-risky", "linear", "graded"];

impl<T: Real> BanditEnv<T> {
    pub fn new(task_id: impl Into<String>, arms: Vec<Vec<Outcome<T>>>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::InvalidEnv("no arms".into()));
        }
        for (a, arm) in arms.iter().enumerate() {
            if arm.is_empty() {
                return Err(Error::InvalidEnv(format!("arm {a} has no outcomes")));
            }
            let mut mass = 0.0;
            for o in arm {
                let (v, p) = (o.value.as_f64(), o.prob.as_f64());
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidEnv(format!("arm {a}: value {v} outside [0, 1]")));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidEnv(format!("arm {a}: probability {p} outside [0, 1]")));
                }
                mass += p;
            }
            if (mass - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidEnv(format!("arm {a}: probabilities sum to {mass}")));
            }
        }
        Ok(Self { arms, task_id: task_id.into() })
    }

    fn from_pairs(task_id: &str, arms: Vec<Vec<(f64, f64)>>) -> Self {
        let arms = arms
            .into_iter()
            .map(|arm| arm.into_iter().map(|(v, p)| Outcome { value: T::lit(v), prob: T::lit(p) }).collect())
            .collect();
        Self::new(task_id, arms).expect("valid fixture")
    }

    /// Arm 0 pays 0.6 surely, arm 1 pays 1.0 or 0.0 with equal odds, eight
    /// filler arms pay 0.1. The mean reward prefers arm 0 while `max@8`
    /// prefers arm 1.
    pub fn safe_vs_risky() -> Self {
        let mut arms = vec![vec![(0.6, 1.0)], vec![(1.0, 0.5), (0.0, 0.5)]];
        arms.extend(std::iter::repeat_n(vec![(0.1, 1.0)], 8));
        Self::from_pairs("safe-vs-risky", arms)
    }

    /// Ten deterministic arms paying `0.1 * i`.
    pub fn linear() -> Self {
        Self::from_pairs("linear", (0..10).map(|i| vec![(0.1 * i as f64, 1.0)]).collect())
    }

    /// Nine deterministic partial-credit arms paying `0.08 * (i + 1)` and one
    /// arm that fully succeeds with probability 0.2 and otherwise pays 0.85.
    /// Only the last arm ever reaches a reward of 1.
    pub fn graded() -> Self {
        let mut arms: Vec<Vec<(f64, f64)>> = (0..9).map(|i| vec![(0.08 * (i + 1) as f64, 1.0)]).collect();
        arms.push(vec![(1.0, 0.2), (0.85, 0.8)]);
        Self::from_pairs("graded", arms)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "safe-vs-risky" => Some(Self::safe_vs_risky()),
            "linear" => Some(Self::linear()),
            "graded" => Some(Self::graded()),
            _ => None,
        }
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn arms(&self) -> &[Vec<Outcome<T>>] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm_mean(&self, arm: usize) -> T {
        self.arms[arm].iter().map(|o| o.value * o.prob).sum()
    }

    pub fn best_arm_mean(&self) -> T {
        (0..self.num_arms()).map(|a| self.arm_mean(a)).fold(T::neg_infinity(), T::max)
    }

    /// Inverse-CDF draw from one arm given a uniform `u` in `[0, 1)`.
    pub fn draw(&self, arm: usize, u: f64) -> T {
        let outcomes = &self.arms[arm];
        let mut acc = 0.0;
        for o in outcomes {
            acc += o.prob.as_f64();
            if u < acc {
                return o.value;
            }
        }
        outcomes[outcomes.len() - 1].value
    }

    /// Distribution of the reward of one completion drawn from `policy`,
    /// as `(value, mass)` pairs sorted by value with equal values merged.
    pub fn reward_mixture(&self, policy: &CategoricalPolicy<T>) -> Result<Vec<(T, T)>> {
        self.check_policy(policy)?;
        let mut atoms: Vec<(T, T)> = Vec::new();
        for (arm, p) in self.arms.iter().zip(policy.probs()) {
            for o in arm {
                atoms.push((o.value, p * o.prob));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (v, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        Ok(merged)
    }

    pub(crate) fn check_policy(&self, policy: &CategoricalPolicy<T>) -> Result<()> {
        if policy.len() != self.num_arms() {
            return Err(Error::LengthMismatch { expected: self.num_arms(), found: policy.len() });
        }
        Ok(())
    }
}

impl BanditEnv<f64> {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnvFile = serde_json::from_str(text)?;
        Self::new(file.task_id.unwrap_or_else(|| "custom".into()), file.arms)
    }

    pub fn to_json(&self) -> String {
        let file = EnvFile { task_id: Some(self.task_id.clone()), arms: self.arms.clone() };
        serde_json::to_string_pretty(&file).expect("serializable env")
    }

    /// Built-in fixture name or path to an environment JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(env) = Self::builtin(name_or_path) {
            return Ok(env);
        }
        let text = std::fs::read_to_string(name_or_path).map_err(|e| {
            Error::Config(format!(
                "environment '{name_or_path}' is neither a built-in ({}) nor a readable file: {e}",
                BUILTIN_ENVS.join(", ")
            ))
        })?;
        let mut env = Self::from_json(&text)?;
        if env.task_id == "custom" {
            if let Some(stem) = std::path::Path::new(name_or_path).file_stem() {
                env.task_id = stem.to_string_lossy().into_owned();
            }
        }
        Ok(env)
    }
}

/// `n` i.i.d. completions sampled from the old policy, with their rewards and
/// old log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    pub actions: Vec<usize>,
    pub rewards: RewardGroup<T>,
    pub old_logprobs: Vec<T>,
}

impl<T: Real> SampleBatch<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// RNG for outer step `stream` of a run seeded with `seed`.
pub fn step_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` actions from `policy` at temperature 1 and a reward for each.
pub fn sample_batch<T: Real, R: Rng + ?Sized>(
    policy: &CategoricalPolicy<T>,
    env: &BanditEnv<T>,
    n: usize,
    rng: &mut R,
) -> Result<SampleBatch<T>> {
    env.check_policy(policy)?;
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    let probs: Vec<f64> = policy.probs().into_iter().map(Real::as_f64).collect();
    let log_probs = policy.log_probs();
    let mut actions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut action = probs.len() - 1;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                action = a;
                break;
            }
        }
        actions.push(action);
        rewards.push(env.draw(action, rng.gen()));
    }
    let old_logprobs = actions.iter().map(|&a| log_probs[a]).collect();
    Ok(SampleBatch { actions, rewards: RewardGroup::new(rewards)?, old_logprobs })
}
