//! Zero-extended binomial coefficients.
//!
//! `C(a, b)` is taken to be `0` whenever `b < 0`, `a < 0` or `b > a`. Every
//! subset-counting weight in the crate relies on this: terms such as
//! `C(j - 3, k - 3)` at `k = 2` must vanish rather than pick up the
//! generalized value of the coefficient.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exact binomial coefficient under the zero-extension convention.
///
/// Returns [`Error::Overflow`] instead of wrapping when the value does not fit
/// in a `u128`.
pub fn binom(a: i64, b: i64) -> Result<u128> {
    if b < 0 || a < 0 || b > a {
        return Ok(0);
    }
    let b = b.min(a - b);
    let mut acc: u128 = 1;
    for i in 1..=b {
        // acc * (a - b + i) / i is an integer at every step: it equals C(a - b + i, i).
        let factor = (a - b + i) as u128;
        acc = acc
            .checked_mul(factor)
            .ok_or(Error::Overflow { a, b })?
            / i as u128;
    }
    Ok(acc)
}

/// `C(a, b) / C(n, k)` as a float.
///
/// Both coefficients are formed exactly when they fit in `u128` and divided
/// once; otherwise the ratio is accumulated as an interleaved product of the
/// individual factors so that intermediate values stay close to one.
pub fn binom_ratio<T: Real>(a: i64, b: i64, n: i64, k: i64) -> Result<T> {
    let den = match binom(n, k) {
        Ok(0) => return Err(Error::ZeroDenominator { n, k }),
        Ok(d) => Some(d),
        Err(_) => None,
    };
    let num = match binom(a, b) {
        Ok(0) => return Ok(T::zero()),
        Ok(v) => Some(v),
        Err(_) => None,
    };
    if let (Some(num), Some(den)) = (num, den) {
        let num = T::from_u128(num).expect("u128 to float");
        let den = T::from_u128(den).expect("u128 to float");
        return Ok(num / den);
    }
    Ok(telescoped_ratio(a, b, n, k))
}

fn telescoped_ratio<T: Real>(a: i64, b: i64, n: i64, k: i64) -> T {
    let b = b.min(a - b);
    let k = k.min(n - k);
    let mut up: Vec<i64> = (1..=b).map(|i| a - b + i).chain(1..=k).collect();
    let mut down: Vec<i64> = (1..=b).chain((1..=k).map(|i| n - k + i)).collect();
    up.sort_unstable();
    down.sort_unstable();

    let mut acc = T::one();
    let (mut u, mut d) = (up.into_iter(), down.into_iter());
    let (mut next_up, mut next_down) = (u.next(), d.next());
    loop {
        match (next_up, next_down) {
            (None, None) => break,
            (Some(x), Some(y)) => {
                if acc >= T::one() {
                    acc = acc / T::lit(y as f64);
                    next_down = d.next();
                } else {
                    acc *= T::lit(x as f64);
                    next_up = u.next();
                }
            }
            (Some(x), None) => {
                acc *= T::lit(x as f64);
                next_up = u.next();
            }
            (None, Some(y)) => {
                acc = acc / T::lit(y as f64);
                next_down = d.next();
            }
        }
    }
    acc
}
