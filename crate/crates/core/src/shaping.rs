//! On-policy Best-of-N reward transform and the advantage baselines that are
//! plugged into the clipped surrogate.
//!
//! Index conventions: weight matrices live in *sorted* space (row `i`, column
//! `j`, both positions in the ascending reward order). Every function that
//! returns per-generation values maps them back to the caller's original
//! order.

use crate::combinatorics::binom_ratio;
use crate::error::{Error, Result};
use crate::metrics::{check_k, RewardGroup};
use crate::scalar::Real;

/// Numerical guard added to the standard deviation in [`zscore`].
pub const ZSCORE_EPS: f64 = 1e-8;

/// Dense `n x n` matrix of subset-counting coefficients divided by `C(n, k)`.
///
/// Entry `(i, j)` weights the `j`-th smallest reward in the coefficient of the
/// `i`-th smallest generation. Only the diagonal and the upper triangle are
/// ever populated.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    n: usize,
    k: usize,
    entries: Vec<T>,
}

impl<T: Real> WeightMatrix<T> {
    pub(crate) fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, entries: vec![T::zero(); n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: T) {
        self.entries[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn total(&self) -> T {
        self.entries.iter().copied().sum()
    }

    /// `out_i = sum_j W(i, j) * values_j`, all in sorted space.
    pub fn apply(&self, sorted_values: &[T]) -> Result<Vec<T>> {
        if sorted_values.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: sorted_values.len() });
        }
        Ok((0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(sorted_values)
                    .map(|(&w, &r)| w * r)
                    .sum()
            })
            .collect())
    }
}

/// Permutation that sorts `values` ascending: `perm[s]` is the original index
/// of the `s`-th smallest value. Ties keep their original order.
pub fn sort_permutation<T: Real>(values: &[T]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    perm
}

pub(crate) fn permute<T: Copy>(values: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&p| values[p]).collect()
}

pub(crate) fn unpermute<T: Real>(sorted: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); sorted.len()];
    for (s, &p) in perm.iter().enumerate() {
        out[p] = sorted[s];
    }
    out
}

/// On-policy weights: `w_ii = C(i-1, k-1)` and `w_ij = C(j-2, k-2)` for
/// `j > i` (1-based, sorted), each divided by `C(n, k)`.
pub fn bon_weights<T: Real>(n: usize, k: usize) -> Result<WeightMatrix<T>> {
    check_k(k, n)?;
    let (nn, kk) = (n as i64, k as i64);
    let mut w = WeightMatrix::zeros(n, k);
    for i in 1..=nn {
        w.set(i as usize - 1, i as usize - 1, binom_ratio(i - 1, kk - 1, nn, kk)?);
        for j in (i + 1)..=nn {
            w.set(i as usize - 1, j as usize - 1, binom_ratio(j - 2, kk - 2, nn, kk)?);
        }
    }
    Ok(w)
}

/// Best-of-N transformed rewards `r~_i = sum_j w_ij r_(j) / C(n, k)`, in the
/// original generation order.
///
/// `sum_i r~_i = k * max@k`, and the policy gradient of `E[max@k]` is estimated
/// without bias by `sum_i grad log pi(y_i) r~_i`.
pub fn bon_rewards<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<Vec<T>> {
    let n = group.len();
    check_k(k, n)?;
    if k == 1 {
        let nf = T::of_usize(n);
        return Ok(group.rewards().iter().map(|&r| r / nf).collect());
    }
    let (nn, kk) = (n as i64, k as i64);
    let perm = sort_permutation(group.rewards());
    let sorted = permute(group.rewards(), &perm);

    // Suffix sums of C(j-2, k-2) r_j give the off-diagonal part of each row.
    let mut out = vec![T::zero(); n];
    let mut tail = T::zero();
    for s in (0..n).rev() {
        let i = s as i64 + 1;
        let diag: T = binom_ratio(i - 1, kk - 1, nn, kk)?;
        out[s] = diag * sorted[s] + tail;
        tail += binom_ratio::<T>(i - 2, kk - 2, nn, kk)? * sorted[s];
    }
    Ok(unpermute(&out, &perm))
}

/// Group z-score `(v_i - mean) / (std + 1e-8)` with population standard
/// deviation. A constant group (up to rounding) maps to all zeros.
pub fn zscore<T: Real>(values: &[T]) -> Result<Vec<T>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientGroup { n, min: 2 });
    }
    if is_constant(values) {
        return Ok(vec![T::zero(); n]);
    }
    let nf = T::of_usize(n);
    let mean = values.iter().copied().sum::<T>() / nf;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
    let denom = var.sqrt() + T::lit(ZSCORE_EPS);
    Ok(values.iter().map(|&v| (v - mean) / denom).collect())
}

/// Constant up to a few ulps: the closed-form transforms of a constant group
/// can differ in the last bits between positions.
fn is_constant<T: Real>(values: &[T]) -> bool {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let scale = lo.abs().max(hi.abs());
    hi - lo <= T::lit(16.0) * T::epsilon() * scale
}

/// Vanilla GRPO advantages.
pub fn zscore_advantages<T: Real>(group: &RewardGroup<T>) -> Result<Vec<T>> {
    zscore(group.rewards())
}

/// z-score applied to the Best-of-N transformed rewards.
pub fn bon_mean_advantages<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<Vec<T>> {
    if group.len() < 2 {
        return Err(Error::InsufficientGroup { n: group.len(), min: 2 });
    }
    zscore(&bon_rewards(group, k)?)
}

/// Advantage only for the generations that attain the group maximum, with the
/// group mean as baseline.
pub fn bon_max_mean_advantages<T: Real>(group: &RewardGroup<T>) -> Result<Vec<T>> {
    let r = group.rewards();
    if r.len() < 2 {
        return Err(Error::InsufficientGroup { n: r.len(), min: 2 });
    }
    if is_constant(r) {
        return Ok(vec![T::zero(); r.len()]);
    }
    let (best, mean) = (group.max(), group.mean());
    Ok(r.iter().map(|&v| if v == best { v - mean } else { T::zero() }).collect())
}

/// Advantage only for the maxima, baseline is the best reward strictly below
/// the maximum. All-equal groups get zero advantage.
pub fn bon_max_second_advantages<T: Real>(group: &RewardGroup<T>) -> Result<Vec<T>> {
    let r = group.rewards();
    if r.len() < 2 {
        return Err(Error::InsufficientGroup { n: r.len(), min: 2 });
    }
    let best = group.max();
    let second = r
        .iter()
        .copied()
        .filter(|&v| v != best)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))));
    Ok(match second {
        None => vec![T::zero(); r.len()],
        Some(s) => r.iter().map(|&v| if v == best { v - s } else { T::zero() }).collect(),
    })
}

/// Best-of-N with a leave-one-out baseline:
/// `A_i = (1 / C(n, k)) * sum_{I containing i} [max(I) - max(I \ i)]`.
///
/// The subtracted term `S_i = sum_{j != i} C(j - 1 - [i < j], k - 2) r_(j)`
/// counts, for every `j`, the `(k-1)`-subsets of the other generations whose
/// maximum is `r_(j)`. Moving `i` one slot up the sorted order only changes the
/// count attached to its neighbours, which gives the recursion
/// `S_{i+1} = S_i + C(i - 1, k - 2) (r_(i) - r_(i+1))`, `S_1 = sum_{j >= 2} C(j - 2, k - 2) r_(j)`.
pub fn loo1_advantages<T: Real>(group: &RewardGroup<T>, k: usize) -> Result<Vec<T>> {
    let n = group.len();
    if k < 2 {
        return Err(Error::LooUndefined { k });
    }
    check_k(k, n)?;
    let (nn, kk) = (n as i64, k as i64);
    let perm = sort_permutation(group.rewards());
    let sorted = permute(group.rewards(), &perm);
    let sorted_bon = permute(&bon_rewards(group, k)?, &perm);

    let mut base = T::zero();
    for (s, &r) in sorted.iter().enumerate().skip(1) {
        let j = s as i64 + 1;
        base += binom_ratio::<T>(j - 2, kk - 2, nn, kk)? * r;
    }
    let mut out = vec![T::zero(); n];
    for s in 0..n {
        out[s] = sorted_bon[s] - base;
        if s + 1 < n {
            let i = s as i64 + 1;
            base += binom_ratio::<T>(i - 1, kk - 2, nn, kk)? * (sorted[s] - sorted[s + 1]);
        }
    }
    Ok(unpermute(&out, &perm))
}
