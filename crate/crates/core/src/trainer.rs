//! GRPO-style training on bandit environments.
//!
//! Every outer step samples `n` completions from the current policy and then
//! takes `ppo_iters` gradient-ascent steps on the clipped surrogate against
//! that fixed batch. Metrics are exact expectations computed from the policy,
//! never Monte Carlo.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandit::{sample_batch, step_rng, BanditEnv, CategoricalPolicy, SampleBatch};
use crate::error::{Error, Result};
use crate::metrics::{max_at_k, RewardGroup};
use crate::offpolicy::{offpolicy_rewards, DeltaVector};
use crate::oracle::oracle_exact_objective;
use crate::shaping::{
    bon_max_mean_advantages, bon_max_second_advantages, bon_mean_advantages, loo1_advantages, zscore,
    zscore_advantages,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    VanillaZscore,
    BonMean,
    BonMaxMean,
    BonMaxSecond,
    Loo1,
    OffpolicyBon,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::VanillaZscore,
        Objective::BonMean,
        Objective::BonMaxMean,
        Objective::BonMaxSecond,
        Objective::Loo1,
        Objective::OffpolicyBon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::VanillaZscore => "vanilla-zscore",
            Objective::BonMean => "bon-mean",
            Objective::BonMaxMean => "bon-max-mean",
            Objective::BonMaxSecond => "bon-max-second",
            Objective::Loo1 => "loo1",
            Objective::OffpolicyBon => "offpolicy-bon",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Objective::ALL.iter().map(|o| o.name()).collect();
            Error::Config(format!("unknown objective '{s}'; valid choices: {}", valid.join(", ")))
        })
    }
}

/// How the off-policy Best-of-N coefficients `r~` become advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BonNormalization {
    /// Group z-score of `r~`.
    Zscore,
    /// `n * r~`.
    Raw,
    /// `n * r~(r - b)`, with `b` a running average of past max@k estimates.
    #[default]
    EmaBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub n: usize,
    pub k: usize,
    pub lr: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub ppo_iters: usize,
    pub steps: usize,
    pub clamp_delta: f64,
    pub seed: u64,
    pub binarize_threshold: Option<f64>,
    /// Only read by `offpolicy-bon`.
    pub normalization: BonNormalization,
    /// Decay of the running baseline under [`BonNormalization::EmaBaseline`].
    pub baseline_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::VanillaZscore,
            n: 8,
            k: 8,
            lr: 0.1,
            beta: 0.01,
            epsilon: 0.2,
            ppo_iters: 3,
            steps: 300,
            clamp_delta: 0.2,
            seed: 0,
            binarize_threshold: None,
            normalization: BonNormalization::default(),
            baseline_decay: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::InvalidK { k: self.k, n: self.n });
        }
        if self.objective == Objective::Loo1 && self.k < 2 {
            return Err(Error::LooUndefined { k: self.k });
        }
        if self.ppo_iters < 1 {
            return bad("ppo_iters must be at least 1".into());
        }
        for (name, v) in [("lr", self.lr), ("beta", self.beta), ("epsilon", self.epsilon), ("clamp_delta", self.clamp_delta)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!("baseline_decay must lie in [0, 1), got {}", self.baseline_decay));
        }
        if let Some(t) = self.binarize_threshold {
            if !t.is_finite() {
                return bad("binarize_threshold must be finite".into());
            }
        }
        Ok(())
    }

    /// Rewards seen by the objective (binarized when a threshold is set).
    pub fn training_rewards(&self, rewards: &RewardGroup<f64>) -> RewardGroup<f64> {
        match self.binarize_threshold {
            Some(t) => rewards.binarize(t),
            None => rewards.clone(),
        }
    }
}

/// Per-completion advantages, in batch order. `baseline` is only read by
/// `offpolicy-bon` under [`BonNormalization::EmaBaseline`].
pub fn advantages_for(
    config: &TrainConfig,
    batch: &SampleBatch<f64>,
    current: &CategoricalPolicy<f64>,
    baseline: f64,
) -> Result<Vec<f64>> {
    let rewards = config.training_rewards(&batch.rewards);
    match config.objective {
        Objective::VanillaZscore => zscore_advantages(&rewards),
        Objective::BonMean => bon_mean_advantages(&rewards, config.k),
        Objective::BonMaxMean => bon_max_mean_advantages(&rewards),
        Objective::BonMaxSecond => bon_max_second_advantages(&rewards),
        Objective::Loo1 => loo1_advantages(&rewards, config.k),
        Objective::OffpolicyBon => {
            let logp = current.log_probs();
            let new_logprobs: Vec<f64> = batch.actions.iter().map(|&a| logp[a]).collect();
            let deltas = DeltaVector::from_log_ratios(&new_logprobs, &batch.old_logprobs)?;
            let shaped = offpolicy_rewards(&rewards, &deltas, config.k, config.clamp_delta)?;
            let n = batch.len() as f64;
            match config.normalization {
                BonNormalization::Zscore => zscore(&shaped),
                BonNormalization::Raw => Ok(shaped.iter().map(|v| n * v).collect()),
                BonNormalization::EmaBaseline => {
                    let ones = RewardGroup::constant(1.0, batch.len())?;
                    let unit = offpolicy_rewards(&ones, &deltas, config.k, config.clamp_delta)?;
                    Ok(shaped.iter().zip(&unit).map(|(s, u)| n * (s - baseline * u)).collect())
                }
            }
        }
    }
}

/// Gradient with respect to the logits of
/// `(1/n) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta KL(pi || pi_old)`.
pub fn surrogate_gradient(
    policy: &CategoricalPolicy<f64>,
    old: &CategoricalPolicy<f64>,
    batch: &SampleBatch<f64>,
    advantages: &[f64],
    epsilon: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    if advantages.len() != batch.len() {
        return Err(Error::LengthMismatch { expected: batch.len(), found: advantages.len() });
    }
    let probs = policy.probs();
    let logp = policy.log_probs();
    let m = probs.len();
    let mut grad = vec![0.0; m];
    let n = batch.len() as f64;
    for ((&a, &old_lp), &adv) in batch.actions.iter().zip(&batch.old_logprobs).zip(advantages) {
        if a >= m {
            return Err(Error::InvalidIndex { index: a, len: m });
        }
        let rho = (logp[a] - old_lp).exp();
        let active = (adv > 0.0 && rho <= 1.0 + epsilon) || (adv < 0.0 && rho >= 1.0 - epsilon);
        if !active {
            continue;
        }
        let scale = rho * adv / n;
        for (g, &p) in grad.iter_mut().zip(&probs) {
            *g -= scale * p;
        }
        grad[a] += scale;
    }
    if beta != 0.0 {
        let old_logp = old.log_probs();
        let ratio: Vec<f64> = logp.iter().zip(&old_logp).map(|(l, q)| l - q).collect();
        let kl: f64 = probs.iter().zip(&ratio).map(|(p, r)| p * r).sum();
        for ((g, &p), &r) in grad.iter_mut().zip(&probs).zip(&ratio) {
            *g -= beta * p * (r - kl);
        }
    }
    Ok(grad)
}

/// One ascent step `theta += lr * grad`.
pub fn grpo_step(
    policy: &CategoricalPolicy<f64>,
    old: &CategoricalPolicy<f64>,
    batch: &SampleBatch<f64>,
    advantages: &[f64],
    config: &TrainConfig,
) -> Result<CategoricalPolicy<f64>> {
    let grad = surrogate_gradient(policy, old, batch, advantages, config.epsilon, config.beta)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalFailure {
            step: 0,
            detail: format!("non-finite gradient {grad:?} at logits {:?}", policy.logits()),
        });
    }
    let logits: Vec<f64> = policy.logits().iter().zip(&grad).map(|(t, g)| t + config.lr * g).collect();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NumericalFailure { step: 0, detail: format!("non-finite logits {logits:?}") });
    }
    CategoricalPolicy::new(logits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub exact_max_at_1: f64,
    pub exact_max_at_k: f64,
    pub entropy: f64,
    pub kl_to_init: f64,
    /// Mean raw reward of the batch sampled at this step; absent at step 0.
    pub mean_reward: Option<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub env: String,
    pub config: TrainConfig,
    pub records: Vec<TrainRecord>,
}

pub const CSV_HEADER: &str = "step,objective,n,k,exact_max_at_1,exact_max_at_k,entropy,kl_to_init,mean_reward";

impl TrainTrace {
    pub fn final_record(&self) -> &TrainRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let mean = r.mean_reward.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.step, c.objective, c.n, c.k, r.exact_max_at_1, r.exact_max_at_k, r.entropy, r.kl_to_init, mean
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// A failed run, with every record written before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainError {
    pub error: Error,
    pub trace: TrainTrace,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} records)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for TrainError {}

fn record(
    step: usize,
    policy: &CategoricalPolicy<f64>,
    init: &CategoricalPolicy<f64>,
    env: &BanditEnv<f64>,
    k: usize,
    mean_reward: Option<f64>,
) -> Result<TrainRecord> {
    Ok(TrainRecord {
        step,
        exact_max_at_1: oracle_exact_objective(policy, env, 1)?,
        exact_max_at_k: oracle_exact_objective(policy, env, k)?,
        entropy: policy.entropy(),
        kl_to_init: policy.kl_divergence(init)?,
        mean_reward,
        probs: policy.probs(),
    })
}

/// Trains a uniform initial policy on `env` for `config.steps` outer steps.
#[allow(clippy::result_large_err)]
pub fn run_training(env: &BanditEnv<f64>, config: &TrainConfig) -> std::result::Result<TrainTrace, TrainError> {
    let mut trace = TrainTrace { env: env.task_id().to_string(), config: config.clone(), records: Vec::new() };
    match train_into(env, config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(TrainError { error, trace }),
    }
}

fn train_into(env: &BanditEnv<f64>, config: &TrainConfig, trace: &mut TrainTrace) -> Result<()> {
    config.validate()?;
    let init = CategoricalPolicy::uniform(env.num_arms())?;
    let mut policy = init.clone();
    trace.records.push(record(0, &policy, &init, env, config.k, None)?);

    let mut baseline: Option<f64> = None;
    for step in 1..=config.steps {
        let mut rng = step_rng(config.seed, step as u64);
        let batch = sample_batch(&policy, env, config.n, &mut rng)?;
        let old = policy.clone();
        let b = baseline.unwrap_or(0.0);
        let fixed = match config.objective {
            Objective::OffpolicyBon => None,
            _ => Some(advantages_for(config, &batch, &old, b)?),
        };
        for _ in 0..config.ppo_iters {
            let adv = match &fixed {
                Some(a) => a.clone(),
                None => advantages_for(config, &batch, &policy, b)?,
            };
            policy = grpo_step(&policy, &old, &batch, &adv, config).map_err(|e| match e {
                Error::NumericalFailure { detail, .. } => Error::NumericalFailure { step, detail },
                other => other,
            })?;
        }
        let estimate = max_at_k(&config.training_rewards(&batch.rewards), config.k)?;
        baseline = Some(match baseline {
            None => estimate,
            Some(prev) => config.baseline_decay * prev + (1.0 - config.baseline_decay) * estimate,
        });
        trace.records.push(record(step, &policy, &init, env, config.k, Some(batch.rewards.mean()))?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaping::bon_mean_advantages;

    fn batch(actions: Vec<usize>, rewards: Vec<f64>, policy: &CategoricalPolicy<f64>) -> SampleBatch<f64> {
        let lp = policy.log_probs();
        let old_logprobs = actions.iter().map(|&a| lp[a]).collect();
        SampleBatch { actions, rewards: RewardGroup::new(rewards).unwrap(), old_logprobs }
    }

    #[test]
    fn objective_names_round_trip() {
        for o in Objective::ALL {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
            assert_eq!(serde_json::to_string(&o).unwrap(), format!("\"{}\"", o.name()));
        }
        let err = "bon-median".parse::<Objective>().unwrap_err().to_string();
        assert!(err.contains("bon-median") && err.contains("offpolicy-bon") && err.contains("loo1"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { k: 9, ..Default::default() },
            TrainConfig { k: 0, ..Default::default() },
            TrainConfig { n: 1, k: 1, ..Default::default() },
            TrainConfig { ppo_iters: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { beta: -0.1, ..Default::default() },
            TrainConfig { epsilon: f64::NAN, ..Default::default() },
            TrainConfig { clamp_delta: 0.0, ..Default::default() },
            TrainConfig { objective: Objective::Loo1, k: 1, ..Default::default() },
            TrainConfig { baseline_decay: 1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let c: TrainConfig = serde_json::from_str(r#"{"objective": "loo1", "k": 4}"#).unwrap();
        assert_eq!(c, TrainConfig { objective: Objective::Loo1, k: 4, ..Default::default() });
        assert!(serde_json::from_str::<TrainConfig>(r#"{"kk": 4}"#).is_err());
    }

    #[test]
    fn advantage_examples() {
        let p = CategoricalPolicy::uniform(3).unwrap();
        let cfg = TrainConfig { n: 2, k: 2, ..Default::default() };
        let b = batch(vec![0, 1], vec![0.0, 1.0], &p);
        let a = advantages_for(&cfg, &b, &p, 0.0).unwrap();
        assert!((a[0] + 1.0).abs() < 1e-7 && (a[1] - 1.0).abs() < 1e-7);

        let cfg = TrainConfig { objective: Objective::BonMaxSecond, n: 3, k: 2, ..Default::default() };
        let b = batch(vec![0, 1, 2], vec![0.2, 0.5, 0.9], &p);
        let a = advantages_for(&cfg, &b, &p, 0.0).unwrap();
        assert_eq!(a[..2], [0.0, 0.0]);
        assert!((a[2] - 0.4).abs() < 1e-15);

        let cfg = TrainConfig { objective: Objective::Loo1, n: 3, k: 1, ..Default::default() };
        assert_eq!(advantages_for(&cfg, &b, &p, 0.0), Err(Error::LooUndefined { k: 1 }));
    }

    #[test]
    fn offpolicy_first_iteration_matches_bon_mean() {
        let p = CategoricalPolicy::new(vec![0.2, -0.1, 0.4, 0.0]).unwrap();
        let b = batch(vec![0, 2, 1, 3, 2, 0], vec![0.1, 0.7, 0.3, 0.9, 0.7, 0.2], &p);
        let cfg = TrainConfig {
            objective: Objective::OffpolicyBon,
            normalization: BonNormalization::Zscore,
            n: 6,
            k: 3,
            ..Default::default()
        };
        let off = advantages_for(&cfg, &b, &p, 0.0).unwrap();
        let on = bon_mean_advantages(&b.rewards, 3).unwrap();
        for (x, y) in off.iter().zip(&on) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ema_baseline_is_the_transform_of_shifted_rewards() {
        // With delta = 0 the transform is linear in the rewards and maps a
        // constant c to c * k / n.
        let p = CategoricalPolicy::uniform(4).unwrap();
        let b = batch(vec![0, 1, 2, 3], vec![0.1, 0.9, 0.4, 0.6], &p);
        let cfg = TrainConfig { objective: Objective::OffpolicyBon, n: 4, k: 2, ..Default::default() };
        let base = 0.35;
        let with = advantages_for(&cfg, &b, &p, base).unwrap();
        let without = advantages_for(&cfg, &b, &p, 0.0).unwrap();
        for (w, wo) in with.iter().zip(&without) {
            assert!((wo - w - 4.0 * base * 2.0 / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let p = CategoricalPolicy::new(vec![0.3, -0.2, 0.1]).unwrap();
        let b = batch(vec![0, 1, 2], vec![0.5; 3], &p);
        let next = grpo_step(&p, &p, &b, &[0.0; 3], &TrainConfig::default()).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn first_iteration_is_reinforce() {
        let p = CategoricalPolicy::new(vec![0.3, -0.2, 0.1, 0.0]).unwrap();
        let b = batch(vec![0, 3, 3, 1, 2], vec![0.1, 0.4, 0.8, 0.2, 1.0], &p);
        let adv = [0.7, -0.3, 1.2, -0.9, 0.05];
        let cfg = TrainConfig { epsilon: 1e9, beta: 0.0, lr: 0.05, ..Default::default() };
        let next = grpo_step(&p, &p, &b, &adv, &cfg).unwrap();
        let mut expect = p.logits().to_vec();
        for (&a, &ad) in b.actions.iter().zip(&adv) {
            for (e, g) in expect.iter_mut().zip(p.logprob_grad(a).unwrap()) {
                *e += cfg.lr * ad * g / 5.0;
            }
        }
        for (x, y) in next.logits().iter().zip(&expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_is_inactive_when_ratios_are_one() {
        let p = CategoricalPolicy::new(vec![0.5, -0.5, 0.0]).unwrap();
        let b = batch(vec![0, 1, 2, 0], vec![0.2, 0.9, 0.4, 0.6], &p);
        let adv = [-1.0, 1.5, 0.2, -0.7];
        let clipped = surrogate_gradient(&p, &p, &b, &adv, 0.2, 0.0).unwrap();
        let open = surrogate_gradient(&p, &p, &b, &adv, 1e9, 0.0).unwrap();
        assert_eq!(clipped, open);
    }

    #[test]
    fn clip_stops_runaway_ratio() {
        let old = CategoricalPolicy::new(vec![0.0, 0.0]).unwrap();
        let b = batch(vec![0, 1], vec![1.0, 0.0], &old);
        let moved = CategoricalPolicy::new(vec![1.0, 0.0]).unwrap();
        // rho_0 = 2 p(0) > 1.2, so the positive advantage no longer pushes.
        let g = surrogate_gradient(&moved, &old, &b, &[1.0, 0.0], 0.2, 0.0).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn positive_advantage_raises_its_logit() {
        let p = CategoricalPolicy::new(vec![0.1, 0.4, -0.3]).unwrap();
        let b = batch(vec![2, 0, 1], vec![0.9, 0.1, 0.1], &p);
        let next = grpo_step(&p, &p, &b, &[1.0, 0.0, 0.0], &TrainConfig::default()).unwrap();
        assert!(next.logits()[2] > p.logits()[2]);
    }

    #[test]
    fn kl_penalty_never_increases_kl() {
        let old = CategoricalPolicy::new(vec![0.0, 0.0, 0.0]).unwrap();
        let b = batch(vec![0, 1], vec![0.3, 0.3], &old);
        let cfg = TrainConfig { beta: 0.5, lr: 0.5, ..Default::default() };
        let mut p = CategoricalPolicy::new(vec![1.2, -0.8, 0.3]).unwrap();
        let mut kl = p.kl_divergence(&old).unwrap();
        for _ in 0..50 {
            p = grpo_step(&p, &old, &b, &[0.0, 0.0], &cfg).unwrap();
            let next = p.kl_divergence(&old).unwrap();
            assert!(next <= kl + 1e-15);
            kl = next;
        }
        assert!(kl < 0.5);
    }

    #[test]
    fn zero_steps_records_only_the_start() {
        let env = BanditEnv::safe_vs_risky();
        let t = run_training(&env, &TrainConfig { steps: 0, ..Default::default() }).unwrap();
        assert_eq!(t.records.len(), 1);
        let r = &t.records[0];
        assert_eq!((r.step, r.mean_reward, r.kl_to_init), (0, None, 0.0));
        assert!((r.entropy - 10f64.ln()).abs() < 1e-12);
        assert!((r.exact_max_at_1 - 0.19).abs() < 1e-12);
    }

    #[test]
    fn runs_are_deterministic() {
        let env = BanditEnv::safe_vs_risky();
        for objective in Objective::ALL {
            let cfg = TrainConfig { objective, steps: 20, k: 4, seed: 7, ..Default::default() };
            let a = run_training(&env, &cfg).unwrap();
            let b = run_training(&env, &cfg).unwrap();
            assert_eq!(a.to_csv(), b.to_csv());
            assert_eq!(a.records.len(), 21);
        }
    }

    #[test]
    fn csv_layout() {
        let env = BanditEnv::linear();
        let t = run_training(&env, &TrainConfig { steps: 2, ..Default::default() }).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,vanilla-zscore,8,8,") && lines[1].ends_with(','));
        assert_eq!(lines[2].split(',').count(), 9);
        let back: TrainTrace = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn invalid_config_returns_empty_partial_trace() {
        let env = BanditEnv::linear();
        let err = run_training(&env, &TrainConfig { lr: -1.0, ..Default::default() }).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
        assert!(err.trace.records.is_empty());
    }

    #[test]
    fn non_finite_gradient_is_a_numerical_failure() {
        let p = CategoricalPolicy::new(vec![1e308, -1e308]).unwrap();
        let old = CategoricalPolicy::uniform(2).unwrap();
        let b = batch(vec![0, 1], vec![1.0, 0.0], &old);
        let err = grpo_step(&p, &old, &b, &[1.0, -1.0], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }), "{err:?}");
    }
}
