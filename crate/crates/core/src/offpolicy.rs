//! First-order off-policy correction of the Best-of-N transform.
//!
//! With importance ratios `rho_i = 1 + delta_i`, the product of ratios over a
//! subset is replaced by `1 + sum_{l in I} delta_l`. Regrouping the deltas over
//! the subsets that share a maximum gives closed-form weights `w'` that
//! reproduce the linearized subset sum exactly.

use crate::combinatorics::binom_ratio;
use crate::error::{Error, Result};
use crate::metrics::{check_k, RewardGroup};
use crate::scalar::Real;
use crate::shaping::{permute, sort_permutation, unpermute, WeightMatrix};

/// Default clamp on `|delta|`, the same as the surrogate clip range.
pub const DEFAULT_CLAMP: f64 = 0.2;

/// `delta_i = rho_i - 1`, one per generation.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVector<T> {
    deltas: Vec<T>,
}

impl<T: Real> DeltaVector<T> {
    pub fn new(deltas: Vec<T>) -> Result<Self> {
        if let Some(d) = deltas.iter().find(|d| !d.is_finite()) {
            return Err(Error::Config(format!("non-finite delta {d}")));
        }
        Ok(Self { deltas })
    }

    pub fn zeros(n: usize) -> Self {
        Self { deltas: vec![T::zero(); n] }
    }

    /// `delta = exp(logp_new - logp_old) - 1` per generation.
    pub fn from_log_ratios(new_logprobs: &[T], old_logprobs: &[T]) -> Result<Self> {
        if new_logprobs.len() != old_logprobs.len() {
            return Err(Error::LengthMismatch {
                expected: old_logprobs.len(),
                found: new_logprobs.len(),
            });
        }
        Self::new(
            new_logprobs
                .iter()
                .zip(old_logprobs)
                .map(|(&a, &b)| (a - b).exp() - T::one())
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[T] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Limits every delta to `[-clamp, clamp]`.
pub fn clamp_deltas<T: Real>(deltas: &DeltaVector<T>, clamp: T) -> Result<DeltaVector<T>> {
    if !(clamp > T::zero() && clamp.is_finite()) {
        return Err(Error::InvalidClamp(clamp.as_f64()));
    }
    Ok(DeltaVector { deltas: deltas.deltas.iter().map(|&d| d.max(-clamp).min(clamp)).collect() })
}

/// Off-policy weights in sorted space (`sorted_deltas[s]` belongs to the
/// `s`-th smallest reward), 1-based indices:
///
/// * `w'_ii = C(i-1, k-1)(1 + d_i) + C(i-2, k-2) sum_{l<i} d_l`
/// * `w'_ij = C(j-2, k-2)(1 + d_i + d_j) + C(j-3, k-3) sum_{l<j, l!=i} d_l`, `j > i`
///
/// all divided by `C(n, k)`.
pub fn offpolicy_weights<T: Real>(sorted_deltas: &[T], n: usize, k: usize) -> Result<WeightMatrix<T>> {
    check_k(k, n)?;
    if sorted_deltas.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: sorted_deltas.len() });
    }
    let (nn, kk) = (n as i64, k as i64);
    // prefix[s] = sum of deltas strictly below sorted position s
    let mut prefix = vec![T::zero(); n + 1];
    for s in 0..n {
        prefix[s + 1] = prefix[s] + sorted_deltas[s];
    }

    let mut w = WeightMatrix::zeros(n, k);
    for s in 0..n {
        let i = s as i64 + 1;
        let d_i = sorted_deltas[s];
        let diag = binom_ratio::<T>(i - 1, kk - 1, nn, kk)? * (T::one() + d_i)
            + binom_ratio::<T>(i - 2, kk - 2, nn, kk)? * prefix[s];
        w.set(s, s, diag);
        for t in (s + 1)..n {
            let j = t as i64 + 1;
            let d_j = sorted_deltas[t];
            let v = binom_ratio::<T>(j - 2, kk - 2, nn, kk)? * (T::one() + d_i + d_j)
                + binom_ratio::<T>(j - 3, kk - 3, nn, kk)? * (prefix[t] - d_i);
            w.set(s, t, v);
        }
    }
    Ok(w)
}

/// Off-policy Best-of-N coefficients `sum_j w'_ij r_(j) / C(n, k)` in the
/// original generation order. Deltas are given in the original order, clamped,
/// then permuted alongside the rewards.
pub fn offpolicy_rewards<T: Real>(
    group: &RewardGroup<T>,
    deltas: &DeltaVector<T>,
    k: usize,
    clamp: T,
) -> Result<Vec<T>> {
    let n = group.len();
    if deltas.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: deltas.len() });
    }
    let clamped = clamp_deltas(deltas, clamp)?;
    let perm = sort_permutation(group.rewards());
    let sorted_rewards = permute(group.rewards(), &perm);
    let sorted_deltas = permute(clamped.as_slice(), &perm);
    let w = offpolicy_weights(&sorted_deltas, n, k)?;
    Ok(unpermute(&w.apply(&sorted_rewards)?, &perm))
}
