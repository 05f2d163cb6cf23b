//! Brute-force references.
//!
//! Everything here enumerates subsets literally (or, for the bandit objective,
//! the reward distribution) and shares no code with the closed forms it is
//! used to check.

use crate::bandit::{BanditEnv, CategoricalPolicy};
use crate::error::{Error, Result};
use crate::metrics::{check_k, RewardGroup};
use crate::offpolicy::DeltaVector;
use crate::scalar::Real;

/// Largest group the enumerating oracles accept.
pub const ORACLE_MAX_N: usize = 20;

/// Central finite-difference step on logits for [`oracle_exact_gradient`].
pub const FD_STEP: f64 = 1e-5;

/// A `k`-subset of `[0, n)`, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetIndex(Vec<usize>);

impl SubsetIndex {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }
}

/// Lexicographic iterator over the `k`-subsets of `[0, n)`.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Subsets {
    pub fn new(n: usize, k: usize) -> Self {
        let current = if k <= n { Some((0..k).collect()) } else { None };
        Self { n, current }
    }
}

impl Iterator for Subsets {
    type Item = SubsetIndex;

    fn next(&mut self) -> Option<SubsetIndex> {
        let cur = self.current.take()?;
        let k = cur.len();
        let mut next = cur.clone();
        // rightmost slot that can still move right
        let mut pos = k;
        while pos > 0 && next[pos - 1] == self.n - k + pos - 1 {
            pos -= 1;
        }
        if pos > 0 {
            next[pos - 1] += 1;
            for t in pos..k {
                next[t] = next[t - 1] + 1;
            }
            self.current = Some(next);
        }
        Some(SubsetIndex(cur))
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge { n, max: ORACLE_MAX_N });
    }
    Ok(())
}

fn subset_max<T: Real>(r: &[T], s: &[usize]) -> T {
    s.iter().map(|&j| r[j]).fold(T::neg_infinity(), T::max)
}

/// Per-generation sums `sum_{I containing i} weight(I) * max(I)`, divided by
/// the number of subsets.
fn enumerate_coefficients<T: Real>(
    r: &[T],
    k: usize,
    weight: impl Fn(&SubsetIndex) -> T,
) -> Result<Vec<T>> {
    let n = r.len();
    check_size(n)?;
    check_k(k, n)?;
    let mut out = vec![T::zero(); n];
    let mut count = 0usize;
    for s in Subsets::new(n, k) {
        let v = weight(&s) * subset_max(r, s.indices());
        for &i in s.indices() {
            out[i] += v;
        }
        count += 1;
    }
    let c = T::of_usize(count);
    Ok(out.into_iter().map(|x| x / c).collect())
}

/// Mean of the subset maximum over every `k`-subset.
pub fn oracle_max_at_k<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<T> {
    let r = group.rewards();
    check_size(r.len())?;
    check_k(k, r.len())?;
    let (mut total, mut count) = (T::zero(), 0usize);
    for s in Subsets::new(r.len(), k) {
        total += subset_max(r, s.indices());
        count += 1;
    }
    Ok(total / T::of_usize(count))
}

/// Fraction of `k`-subsets containing at least one correct generation.
pub fn oracle_pass_at_k(correct: &[bool], k: usize) -> Result<f64> {
    check_size(correct.len())?;
    check_k(k, correct.len())?;
    let (mut hit, mut count) = (0usize, 0usize);
    for s in Subsets::new(correct.len(), k) {
        if s.indices().iter().any(|&i| correct[i]) {
            hit += 1;
        }
        count += 1;
    }
    Ok(hit as f64 / count as f64)
}

/// `sum_{I containing i} max(I) / C(n, k)`.
pub fn oracle_bon_rewards<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<Vec<T>> {
    enumerate_coefficients(group.rewards(), k, |_| T::one())
}

/// `sum_{I containing i} (1 + sum_{l in I} delta_l) max(I) / C(n, k)`.
pub fn oracle_offpolicy_linearized<T: Real>(
    group: &RewardGroup<T>,
    deltas: &DeltaVector<T>,
    k: usize,
) -> Result<Vec<T>> {
    let d = deltas.as_slice();
    if d.len() != group.len() {
        return Err(Error::LengthMismatch { expected: group.len(), found: d.len() });
    }
    enumerate_coefficients(group.rewards(), k, |s| {
        T::one() + s.indices().iter().map(|&l| d[l]).sum::<T>()
    })
}

/// `sum_{I containing i} (prod_{l in I} rho_l) max(I) / C(n, k)`.
pub fn oracle_offpolicy_full<T: Real>(group: &RewardGroup<T>, ratios: &[T], k: usize) -> Result<Vec<T>> {
    if ratios.len() != group.len() {
        return Err(Error::LengthMismatch { expected: group.len(), found: ratios.len() });
    }
    if ratios.iter().any(|&r| r.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::Config("importance ratios must be positive".into()));
    }
    enumerate_coefficients(group.rewards(), k, |s| {
        s.indices().iter().fold(T::one(), |acc, &l| acc * ratios[l])
    })
}

/// `sum_{I containing i} [max(I) - max(I \ i)] / C(n, k)`.
pub fn oracle_loo1<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<Vec<T>> {
    if k < 2 {
        return Err(Error::LooUndefined { k });
    }
    let r = group.rewards();
    let n = r.len();
    check_size(n)?;
    check_k(k, n)?;
    let mut out = vec![T::zero(); n];
    let mut count = 0usize;
    for s in Subsets::new(n, k) {
        let full = subset_max(r, s.indices());
        for &i in s.indices() {
            let rest = s.indices().iter().filter(|&&j| j != i).map(|&j| r[j]).fold(T::neg_infinity(), T::max);
            out[i] += full - rest;
        }
        count += 1;
    }
    let c = T::of_usize(count);
    Ok(out.into_iter().map(|x| x / c).collect())
}

/// Exact `E[max of k i.i.d. rewards]` under the policy-induced reward mixture:
/// `sum_v v (F(v)^k - F(v-)^k)`.
pub fn oracle_exact_objective<T: Real>(policy: &CategoricalPolicy<T>, env: &BanditEnv<T>, k: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::InvalidK { k, n: 0 });
    }
    let kk = k as i32;
    let mut cdf = T::zero();
    let mut total = T::zero();
    for (v, mass) in env.reward_mixture(policy)? {
        let below = cdf.powi(kk);
        cdf += mass;
        total += v * (cdf.min(T::one()).powi(kk) - below);
    }
    Ok(total)
}

/// Gradient of [`oracle_exact_objective`] with respect to the logits by central
/// differences with step [`FD_STEP`].
pub fn oracle_exact_gradient<T: Real>(
    policy: &CategoricalPolicy<T>,
    env: &BanditEnv<T>,
    k: usize,
) -> Result<Vec<T>> {
    let h = T::lit(FD_STEP);
    let logits = policy.logits();
    let mut grad = Vec::with_capacity(logits.len());
    for m in 0..logits.len() {
        let mut up = logits.to_vec();
        let mut down = logits.to_vec();
        up[m] += h;
        down[m] -= h;
        let f_up = oracle_exact_objective(&CategoricalPolicy::new(up)?, env, k)?;
        let f_down = oracle_exact_objective(&CategoricalPolicy::new(down)?, env, k)?;
        grad.push((f_up - f_down) / (h + h));
    }
    Ok(grad)
}
