//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped and tied `|d|` receive average ranks. Up to
//! [`EXACT_MAX_PAIRS`] non-zero pairs the null distribution of `W+` is counted
//! exactly; above that a normal approximation with tie and continuity
//! corrections is used. If every difference is zero the p-value is 1.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

pub const EXACT_MAX_PAIRS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `x` tends to exceed `y`.
    Greater,
    /// `x` tends to fall below `y`.
    Less,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n_used: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks (1-based) of `|d|`, with ties sharing their mean rank.
pub fn signed_ranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &o in &order[start..end] {
            ranks[o] = avg;
        }
        start = end;
    }
    ranks
}

fn nonzero_diffs(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Report(format!("need at least 2 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Report("non-finite sample".into()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a - b).filter(|&d| d != 0.0).collect())
}

/// Null distribution of `2 W+` as counts over the `2^m` sign assignments.
/// Ranks are doubled so tied half-ranks stay integral.
fn exact_counts(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn tails(counts: &[f64], stat2: usize) -> (f64, f64) {
    let all: f64 = counts.iter().sum();
    let upper: f64 = counts[stat2..].iter().sum::<f64>() / all;
    let lower: f64 = counts[..=stat2].iter().sum::<f64>() / all;
    (lower, upper)
}

fn combine(lower: f64, upper: f64, alt: Alternative) -> f64 {
    let p = match alt {
        Alternative::TwoSided => 2.0 * lower.min(upper),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    };
    p.clamp(0.0, 1.0)
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alt: Alternative) -> Result<WilcoxonResult> {
    let d = nonzero_diffs(x, y)?;
    let m = d.len();
    if m == 0 {
        return Ok(WilcoxonResult { w_plus: 0.0, n_used: 0, p_value: 1.0, exact: true });
    }
    let ranks = signed_ranks(&d);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if m <= EXACT_MAX_PAIRS {
        let counts = exact_counts(&ranks);
        let (lower, upper) = tails(&counts, (2.0 * w_plus).round() as usize);
        return Ok(WilcoxonResult { w_plus, n_used: m, p_value: combine(lower, upper, alt), exact: true });
    }

    let mf = m as f64;
    let mean = mf * (mf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Ok(WilcoxonResult { w_plus, n_used: m, p_value: 1.0, exact: false });
    }
    let sd = var.sqrt();
    let normal = Normal::standard();
    let upper = normal.sf((w_plus - mean - 0.5) / sd);
    let lower = normal.cdf((w_plus - mean + 0.5) / sd);
    Ok(WilcoxonResult { w_plus, n_used: m, p_value: combine(lower.min(1.0), upper.min(1.0), alt), exact: false })
}

/// Reference p-value by walking all `2^m` sign assignments.
pub fn wilcoxon_brute_force(x: &[f64], y: &[f64], alt: Alternative) -> Result<f64> {
    let d = nonzero_diffs(x, y)?;
    let m = d.len();
    if m == 0 {
        return Ok(1.0);
    }
    if m > EXACT_MAX_PAIRS {
        return Err(Error::OracleTooLarge { n: m, max: EXACT_MAX_PAIRS });
    }
    let ranks = signed_ranks(&d);
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << m) {
        let w: f64 = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| ranks[b]).sum();
        if w >= observed - 1e-9 {
            ge += 1;
        }
        if w <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << m) as f64;
    Ok(combine(le as f64 / total, ge as f64 / total, alt))
}
