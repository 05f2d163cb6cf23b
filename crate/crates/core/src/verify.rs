//! Property suite: every closed form against its enumerating oracle, the
//! unbiasedness of the Best-of-N gradient estimator, and the Wilcoxon test.
//!
//! The implementations under test are passed in as [`Implementations`] so a
//! deliberately broken formula can be swapped in and must be caught.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bandit::{sample_batch, step_rng, BanditEnv, CategoricalPolicy};
use crate::combinatorics::binom_ratio;
use crate::error::{Error, Result};
use crate::metrics::{max_at_k, pass_at_k, RewardGroup};
use crate::offpolicy::{offpolicy_rewards, DeltaVector};
use crate::oracle::{
    oracle_bon_rewards, oracle_exact_gradient, oracle_loo1, oracle_max_at_k, oracle_offpolicy_full,
    oracle_offpolicy_linearized, oracle_pass_at_k, ORACLE_MAX_N,
};
use crate::shaping::{bon_rewards, bon_weights, loo1_advantages, permute, sort_permutation, unpermute, WeightMatrix};
use crate::stats::{wilcoxon_brute_force, wilcoxon_signed_rank, Alternative};

pub const EXACT_TOL: f64 = 1e-10;
pub const MASS_TOL: f64 = 1e-12;
/// Minimum shrink of the linearization gap when every delta is halved.
pub const GAP_SHRINK: f64 = 3.5;
pub const UNBIASED_SE: f64 = 4.0;
pub const UNBIASED_KS: [usize; 3] = [2, 4, 8];
/// Frozen policy used by the unbiasedness check on `safe-vs-risky`.
pub const UNBIASED_LOGITS: [f64; 10] = [0.5, 0.3, -0.2, 0.1, 0.0, -0.4, 0.2, -0.1, 0.3, -0.3];

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub max_n: usize,
    pub trials: usize,
    pub gap_trials: usize,
    pub seed: u64,
    pub unbiased_batches: usize,
    pub unbiased_n: usize,
    pub wilcoxon_max_pairs: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            max_n: 10,
            trials: 1000,
            gap_trials: 100,
            seed: 0,
            unbiased_batches: 200_000,
            unbiased_n: 8,
            wilcoxon_max_pairs: 12,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_n < 2 || self.max_n > ORACLE_MAX_N {
            return Err(Error::Config(format!("max_n must lie in [2, {ORACLE_MAX_N}], got {}", self.max_n)));
        }
        if self.trials == 0 || self.gap_trials == 0 || self.unbiased_batches < 2 {
            return Err(Error::Config("trial counts must be positive".into()));
        }
        if self.unbiased_n < UNBIASED_KS[UNBIASED_KS.len() - 1] {
            return Err(Error::Config(format!("unbiased_n must be at least {}", UNBIASED_KS[2])));
        }
        if self.wilcoxon_max_pairs < 2 || self.wilcoxon_max_pairs > 20 {
            return Err(Error::Config("wilcoxon_max_pairs must lie in [2, 20]".into()));
        }
        Ok(())
    }
}

type GroupK<O> = fn(&RewardGroup<f64>, usize) -> Result<O>;
type OffpolicyFn = fn(&RewardGroup<f64>, &DeltaVector<f64>, usize, f64) -> Result<Vec<f64>>;

#[derive(Clone, Copy)]
pub struct Implementations {
    pub max_at_k: GroupK<f64>,
    pub pass_at_k: fn(usize, usize, usize) -> Result<f64>,
    pub bon_weights: fn(usize, usize) -> Result<WeightMatrix<f64>>,
    pub bon_rewards: GroupK<Vec<f64>>,
    pub offpolicy_rewards: OffpolicyFn,
    pub loo1: GroupK<Vec<f64>>,
}

impl Default for Implementations {
    fn default() -> Self {
        Self {
            max_at_k,
            pass_at_k,
            bon_weights,
            bon_rewards,
            offpolicy_rewards,
            loo1: loo1_advantages,
        }
    }
}

/// On-policy weights with the diagonal shifted to `C(i, k-1)`.
pub fn mutated_bon_weights(n: usize, k: usize) -> Result<WeightMatrix<f64>> {
    let mut w = bon_weights(n, k)?;
    for s in 0..n {
        w.set(s, s, binom_ratio(s as i64 + 1, k as i64 - 1, n as i64, k as i64)?);
    }
    Ok(w)
}

/// Best-of-N transform built from [`mutated_bon_weights`].
pub fn mutated_bon_rewards(group: &RewardGroup<f64>, k: usize) -> Result<Vec<f64>> {
    let perm = sort_permutation(group.rewards());
    let sorted = permute(group.rewards(), &perm);
    let out = mutated_bon_weights(group.len(), k)?.apply(&sorted)?;
    Ok(unpermute(&out, &perm))
}

impl Implementations {
    /// Named deliberate faults, for checking that the suite can fail.
    pub const MUTATIONS: [&'static str; 1] = ["diag-off-by-one"];

    pub fn mutated(name: &str) -> Result<Self> {
        match name {
            "diag-off-by-one" => Ok(Self {
                bon_weights: mutated_bon_weights,
                bon_rewards: mutated_bon_rewards,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown mutation '{other}'; valid choices: {}",
                Self::MUTATIONS.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed deviation, in the property's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub counterexample: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Deviation bookkeeping for one property; deviations above `tolerance` (or
/// NaN) fail, and the first worst failing case is kept.
struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    cases: usize,
    failed: bool,
    counterexample: Option<Value>,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, tolerance, worst: 0.0, cases: 0, failed: false, counterexample: None }
    }

    fn observe(&mut self, deviation: f64, describe: impl FnOnce() -> Value) {
        self.cases += 1;
        let dev = if deviation.is_nan() { f64::INFINITY } else { deviation };
        let bad = dev > self.tolerance;
        if dev > self.worst {
            self.worst = dev;
            if bad {
                self.counterexample = Some(describe());
            }
        }
        self.failed |= bad;
    }

    fn error(&mut self, err: &Error, describe: impl FnOnce() -> Value) {
        self.observe(f64::INFINITY, || {
            let mut v = describe();
            v["error"] = json!(err.to_string());
            v
        });
    }

    fn compare(&mut self, found: Result<Vec<f64>>, expected: &[f64], describe: impl Fn() -> Value) {
        match found {
            Ok(f) => {
                let dev = max_abs_diff(&f, expected);
                self.observe(dev, || {
                    let mut v = describe();
                    v["expected"] = json!(expected);
                    v["found"] = json!(f);
                    v
                });
            }
            Err(e) => self.error(&e, describe),
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            passed: !self.failed && self.cases > 0,
            cases: self.cases,
            worst: self.worst,
            tolerance: self.tolerance,
            counterexample: self.counterexample,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random rewards in `[0, 1]`; every other group is drawn from a five-value
/// grid so that ties are common.
pub fn random_group<R: Rng>(rng: &mut R, n: usize, trial: usize) -> RewardGroup<f64> {
    let rewards = (0..n)
        .map(|_| if trial.is_multiple_of(2) { rng.gen::<f64>() } else { rng.gen_range(0..5) as f64 / 4.0 })
        .collect();
    RewardGroup::new(rewards).expect("rewards in range")
}

fn random_deltas<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// Calls `f(n, trial, rng)` for `trials` random cases per `n` in `min_n..=max_n`.
fn sweep(config: &VerifyConfig, stream: u64, min_n: usize, mut f: impl FnMut(usize, usize, &mut rand_chacha::ChaCha8Rng)) {
    let mut rng = step_rng(config.seed, stream);
    for t in 0..config.trials {
        let n = min_n + t % (config.max_n + 1 - min_n);
        f(n, t, &mut rng);
    }
}

pub fn check_max_at_k(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("max_at_k matches subset enumeration", EXACT_TOL);
    sweep(config, 1, 1, |n, t, rng| {
        let g = random_group(rng, n, t);
        for k in 1..=n {
            let expected = oracle_max_at_k(&g, k).expect("oracle");
            let describe = || json!({"rewards": g.rewards(), "k": k});
            tr.compare((imp.max_at_k)(&g, k).map(|v| vec![v]), &[expected], describe);
        }
    });
    tr.finish()
}

pub fn check_pass_at_k(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("pass_at_k matches subset enumeration", EXACT_TOL);
    sweep(config, 2, 1, |n, _, rng| {
        let correct: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let c = correct.iter().filter(|&&b| b).count();
        for k in 1..=n {
            let expected = oracle_pass_at_k(&correct, k).expect("oracle");
            let describe = || json!({"n": n, "c": c, "k": k});
            tr.compare((imp.pass_at_k)(n, c, k).map(|v| vec![v]), &[expected], describe);
        }
    });
    tr.finish()
}

pub fn check_bon_rewards(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("bon_rewards matches subset enumeration", EXACT_TOL);
    sweep(config, 3, 1, |n, t, rng| {
        let g = random_group(rng, n, t);
        for k in 1..=n {
            let expected = oracle_bon_rewards(&g, k).expect("oracle");
            tr.compare((imp.bon_rewards)(&g, k), &expected, || json!({"rewards": g.rewards(), "k": k}));
        }
    });
    tr.finish()
}

pub fn check_weight_mass(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("weight entries sum to k", MASS_TOL);
    for n in 1..=config.max_n {
        for k in 1..=n {
            match (imp.bon_weights)(n, k) {
                Ok(w) => {
                    let total = w.total();
                    tr.observe((total - k as f64).abs(), || json!({"n": n, "k": k, "total": total}));
                }
                Err(e) => tr.error(&e, || json!({"n": n, "k": k})),
            }
        }
    }
    tr.finish()
}

pub fn check_transform_total(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("transformed rewards sum to k * max@k", EXACT_TOL);
    sweep(config, 4, 1, |n, t, rng| {
        let g = random_group(rng, n, t);
        for k in 1..=n {
            let target = k as f64 * oracle_max_at_k(&g, k).expect("oracle");
            let describe = || json!({"rewards": g.rewards(), "k": k});
            tr.compare((imp.bon_rewards)(&g, k).map(|r| vec![r.iter().sum()]), &[target], describe);
        }
    });
    tr.finish()
}

pub fn check_offpolicy(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("offpolicy_rewards matches linearized enumeration", EXACT_TOL);
    sweep(config, 5, 1, |n, t, rng| {
        let g = random_group(rng, n, t);
        let d = DeltaVector::new(random_deltas(rng, n, 0.2)).expect("finite");
        for k in 1..=n {
            let expected = oracle_offpolicy_linearized(&g, &d, k).expect("oracle");
            let describe = || json!({"rewards": g.rewards(), "deltas": d.as_slice(), "k": k});
            tr.compare((imp.offpolicy_rewards)(&g, &d, k, 0.2), &expected, describe);
        }
    });
    tr.finish()
}

/// With zero deltas the off-policy transform equals the on-policy weight
/// matrix applied to the sorted rewards, bit for bit.
pub fn check_offpolicy_reduction(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("zero deltas reduce to the on-policy transform", 0.0);
    sweep(config, 6, 1, |n, t, rng| {
        let g = random_group(rng, n, t);
        let perm = sort_permutation(g.rewards());
        let sorted = permute(g.rewards(), &perm);
        for k in 1..=n {
            let describe = || json!({"rewards": g.rewards(), "k": k});
            let on = match (imp.bon_weights)(n, k).and_then(|w| w.apply(&sorted)) {
                Ok(v) => unpermute(&v, &perm),
                Err(e) => return tr.error(&e, describe),
            };
            tr.compare((imp.offpolicy_rewards)(&g, &DeltaVector::zeros(n), k, 0.2), &on, describe);
        }
    });
    tr.finish()
}

/// Ratio of mean linearization gaps at delta and delta / 2; the property
/// "passes" when `GAP_SHRINK / ratio <= 1`.
pub fn check_linearization_order(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("linearization gap is second order in delta", 1.0);
    let mut rng = step_rng(config.seed, 7);
    let (mut full_gap, mut half_gap) = (0.0, 0.0);
    let mut first = None;
    for t in 0..config.gap_trials {
        let n = 2 + t % (config.max_n - 1);
        let k = 2 + t % (n - 1);
        let g = random_group(&mut rng, n, t);
        let d = random_deltas(&mut rng, n, 0.2);
        let half: Vec<f64> = d.iter().map(|x| x / 2.0).collect();
        let gap = |deltas: &[f64]| -> Result<f64> {
            let ratios: Vec<f64> = deltas.iter().map(|x| 1.0 + x).collect();
            let exact = oracle_offpolicy_full(&g, &ratios, k)?;
            let lin = (imp.offpolicy_rewards)(&g, &DeltaVector::new(deltas.to_vec())?, k, 0.2)?;
            Ok(max_abs_diff(&lin, &exact))
        };
        match (gap(&d), gap(&half)) {
            (Ok(a), Ok(b)) => {
                full_gap += a;
                half_gap += b;
                first.get_or_insert_with(|| json!({"rewards": g.rewards(), "deltas": d, "k": k}));
            }
            (Err(e), _) | (_, Err(e)) => tr.error(&e, || json!({"rewards": g.rewards(), "deltas": d, "k": k})),
        }
    }
    let ratio = full_gap / half_gap;
    tr.observe(GAP_SHRINK / ratio, || json!({"shrink": ratio, "required": GAP_SHRINK, "first_case": first}));
    tr.finish()
}

pub fn check_loo1(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("loo1 matches leave-one-out enumeration", EXACT_TOL);
    sweep(config, 8, 2, |n, t, rng| {
        let g = random_group(rng, n, t);
        for k in 2..=n {
            let expected = oracle_loo1(&g, k).expect("oracle");
            tr.compare((imp.loo1)(&g, k), &expected, || json!({"rewards": g.rewards(), "k": k}));
        }
    });
    tr.finish()
}

/// Monte Carlo mean and standard error of `sum_i grad log pi(a_i) r~_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub k: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub exact: Vec<f64>,
    /// `max_m |mean_m - exact_m| / se_m`.
    pub worst_z: f64,
}

const CHUNK: usize = 1000;

pub fn estimate_bon_gradient(
    policy: &CategoricalPolicy<f64>,
    env: &BanditEnv<f64>,
    n: usize,
    k: usize,
    batches: usize,
    seed: u64,
    transform: GroupK<Vec<f64>>,
) -> Result<GradientEstimate> {
    let m = policy.len();
    let probs = policy.probs();
    let chunks = batches.div_ceil(CHUNK);
    let partial: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = step_rng(seed, 1_000_000 + c as u64);
            let (mut sum, mut sq) = (vec![0.0; m], vec![0.0; m]);
            let count = CHUNK.min(batches - c * CHUNK);
            for _ in 0..count {
                let b = sample_batch(policy, env, n, &mut rng)?;
                let r = transform(&b.rewards, k)?;
                // grad log pi(a) = e_a - p
                let weight: f64 = r.iter().sum();
                let mut g: Vec<f64> = probs.iter().map(|p| -p * weight).collect();
                for (&a, &ri) in b.actions.iter().zip(&r) {
                    g[a] += ri;
                }
                for ((s, q), x) in sum.iter_mut().zip(sq.iter_mut()).zip(&g) {
                    *s += x;
                    *q += x * x;
                }
            }
            Ok((sum, sq))
        })
        .collect();
    let (mut sum, mut sq) = (vec![0.0; m], vec![0.0; m]);
    for p in partial {
        let (s, q) = p?;
        for i in 0..m {
            sum[i] += s[i];
            sq[i] += q[i];
        }
    }
    let r = batches as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let std_error: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(q, mu)| ((q / r - mu * mu).max(0.0) * r / (r - 1.0) / r).sqrt())
        .collect();
    let exact = oracle_exact_gradient(policy, env, k)?;
    let worst_z = mean
        .iter()
        .zip(&exact)
        .zip(&std_error)
        .map(|((mu, e), se)| {
            let d = (mu - e).abs();
            if *se > 0.0 {
                d / se
            } else if d < EXACT_TOL {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(GradientEstimate { k, mean, std_error, exact, worst_z })
}

pub fn check_unbiasedness(config: &VerifyConfig, imp: &Implementations) -> PropertyResult {
    let mut tr = Tracker::new("bon gradient estimate is unbiased", UNBIASED_SE);
    let env = BanditEnv::safe_vs_risky();
    let policy = CategoricalPolicy::new(UNBIASED_LOGITS.to_vec()).expect("finite logits");
    for k in UNBIASED_KS {
        let seed = config.seed.wrapping_add(k as u64);
        match estimate_bon_gradient(&policy, &env, config.unbiased_n, k, config.unbiased_batches, seed, imp.bon_rewards) {
            Ok(est) => tr.observe(est.worst_z, || json!(est)),
            Err(e) => tr.error(&e, || json!({"k": k})),
        }
    }
    tr.finish()
}

pub fn check_wilcoxon(config: &VerifyConfig) -> PropertyResult {
    let mut tr = Tracker::new("wilcoxon exact path matches sign enumeration", 1e-12);
    let x = [0.9, 0.8, 0.7, 0.95, 0.85];
    let y = [0.5, 0.6, 0.4, 0.3, 0.2];
    match wilcoxon_signed_rank(&x, &y, Alternative::TwoSided) {
        Ok(r) => tr.observe((r.p_value - 0.0625).abs(), || json!({"x": x, "y": y, "p": r.p_value})),
        Err(e) => tr.error(&e, || json!({"x": x, "y": y})),
    }
    let mut rng = step_rng(config.seed, 9);
    for t in 0..config.trials.min(500) {
        let m = 2 + t % (config.wilcoxon_max_pairs - 1);
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0..6) as f64 / 5.0).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(0..6) as f64 / 5.0).collect();
        for alt in [Alternative::TwoSided, Alternative::Greater, Alternative::Less] {
            let describe = || json!({"x": x, "y": y, "alternative": format!("{alt:?}")});
            match (wilcoxon_signed_rank(&x, &y, alt), wilcoxon_brute_force(&x, &y, alt)) {
                (Ok(fast), Ok(slow)) => tr.observe((fast.p_value - slow).abs(), describe),
                (Err(e), _) | (_, Err(e)) => tr.error(&e, describe),
            }
        }
    }
    tr.finish()
}

/// Runs every property. Properties are independent and evaluated in
/// parallel; the report lists them in a fixed order.
pub fn run_suite(config: &VerifyConfig, imp: &Implementations) -> Result<SuiteReport> {
    config.validate()?;
    type Check = fn(&VerifyConfig, &Implementations) -> PropertyResult;
    let checks: [Check; 10] = [
        check_max_at_k,
        check_pass_at_k,
        check_bon_rewards,
        check_weight_mass,
        check_transform_total,
        check_offpolicy,
        check_offpolicy_reduction,
        check_linearization_order,
        check_loo1,
        check_unbiasedness,
    ];
    let mut properties: Vec<PropertyResult> = checks.par_iter().map(|c| c(config, imp)).collect();
    properties.push(check_wilcoxon(config));
    Ok(SuiteReport { properties })
}
