//! Unbiased `pass@k` and `max@k` estimators over a finite sample of
//! generations.

use crate::combinatorics::binom_ratio;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// The rewards of the `n` generations sampled for one prompt.
///
/// Non-empty, every entry finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardGroup<T> {
    rewards: Vec<T>,
}

impl<T: Real> RewardGroup<T> {
    pub fn new(rewards: Vec<T>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::EmptyGroup);
        }
        for (index, &r) in rewards.iter().enumerate() {
            if !(r >= T::zero() && r <= T::one()) {
                return Err(Error::RewardOutOfRange { index, value: r.as_f64() });
            }
        }
        Ok(Self { rewards })
    }

    /// A group of `n` identical rewards.
    pub fn constant(value: T, n: usize) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn mean(&self) -> T {
        self.rewards.iter().copied().sum::<T>() / T::of_usize(self.len())
    }

    pub fn max(&self) -> T {
        self.rewards.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `1` where the reward reaches `threshold`, `0` elsewhere.
    pub fn binarize(&self, threshold: T) -> Self {
        let rewards = self
            .rewards
            .iter()
            .map(|&r| if r >= threshold { T::one() } else { T::zero() })
            .collect();
        Self { rewards }
    }

    /// Rewards in ascending order (stable).
    pub fn sorted(&self) -> Vec<T> {
        let mut s = self.rewards.clone();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite rewards"));
        s
    }
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    Ok(())
}

/// Fraction of the `C(n, k)` subsets that contain at least one of the `c`
/// correct generations: `1 - C(n - c, k) / C(n, k)`.
pub fn pass_at_k<T: Real>(n: usize, c: usize, k: usize) -> Result<T> {
    check_k(k, n)?;
    if c > n {
        return Err(Error::InvalidCount { c, n });
    }
    let miss: T = binom_ratio((n - c) as i64, k as i64, n as i64, k as i64)?;
    Ok(T::one() - miss)
}

/// Average over all `k`-subsets of the subset maximum.
///
/// With ascending rewards `r_1 <= ... <= r_n`, the reward `r_i` is the maximum
/// of exactly `C(i - 1, k - 1)` subsets.
pub fn max_at_k<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<T> {
    let n = group.len();
    check_k(k, n)?;
    let sorted = group.sorted();
    let mut acc = T::zero();
    for (idx, &r) in sorted.iter().enumerate().skip(k - 1) {
        let i = idx as i64 + 1;
        let w: T = binom_ratio(i - 1, k as i64 - 1, n as i64, k as i64)?;
        acc += w * r;
    }
    Ok(acc)
}

/// `pass@k` after counting a generation as correct iff its reward is at least
/// `threshold`.
pub fn pass_at_k_from_rewards<T: Real>(group: &RewardGroup<T>, threshold: T, k: usize) -> Result<T> {
    let c = group.rewards().iter().filter(|&&r| r >= threshold).count();
    pass_at_k(group.len(), c, k)
}
