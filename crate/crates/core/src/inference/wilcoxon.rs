//! Wilcoxon signed-rank test with a Hodges–Lehmann interval.

use super::dist::{normal_cdf, normal_quantile};
use super::Alternative;

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// Exact for `m ≤ 25`, normal approximation above.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedRank {
    /// Sum of the ranks of positive differences.
    pub v: f64,
    /// Number of non-zero differences.
    pub m: usize,
    pub p_value: f64,
    pub exact: bool,
    /// Hodges–Lehmann pseudo-median.
    pub estimate: f64,
    pub conf_lower: f64,
    pub conf_upper: f64,
}

/// Midranks of `values` (1-based).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Null distribution of the doubled statistic `2V` for the given doubled
/// ranks: `counts[s]` sign patterns reach `2V = s`.
fn doubled_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Smallest `q` with `P(V ≤ q) ≥ prob` for untied ranks `1..=m`.
fn qsignrank(prob: f64, m: usize) -> usize {
    let doubled: Vec<usize> = (1..=m).map(|r| 2 * r).collect();
    let counts = doubled_counts(&doubled);
    let total = 2f64.powi(m as i32);
    let mut acc = 0.0;
    for (s2, c) in counts.iter().enumerate().step_by(2) {
        acc += c;
        if acc / total >= prob * (1.0 - 64.0 * f64::EPSILON) {
            return s2 / 2;
        }
    }
    m * (m + 1) / 2
}

fn walsh(x: &[f64], i: usize, j: usize) -> f64 {
    0.5 * (x[i] + x[j])
}

/// Number of Walsh averages `≤ t` for sorted `x`.
fn count_le(x: &[f64], t: f64) -> usize {
    let n = x.len();
    let mut count = 0;
    let mut j = n;
    for i in 0..n {
        while j > i && walsh(x, i, j - 1) > t {
            j -= 1;
        }
        if j <= i {
            break;
        }
        count += j - i;
    }
    count
}

/// k-th smallest (1-based) Walsh average of sorted `x` without
/// materializing all `m(m+1)/2` of them.
fn kth_walsh(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let (mut lo, mut hi) = (x[0], x[n - 1]);
    if count_le(x, lo) >= k {
        return lo;
    }
    // invariant: count_le(lo) < k <= count_le(hi)
    for _ in 0..2000 {
        let c_lo = count_le(x, lo);
        let c_hi = count_le(x, hi);
        if c_hi - c_lo <= 4096 {
            let mut cand = Vec::with_capacity(c_hi - c_lo);
            for i in 0..n {
                let start = x[i..].partition_point(|&v| 0.5 * (x[i] + v) <= lo) + i;
                for j in start..n {
                    let w = walsh(x, i, j);
                    if w > hi {
                        break;
                    }
                    cand.push(w);
                }
            }
            cand.sort_by(f64::total_cmp);
            return cand[k - c_lo - 1];
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if count_le(x, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn signed_rank_test(d: &[f64], alternative: Alternative, alpha: f64, method: PMethod) -> SignedRank {
    let mut x: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let m = x.len();
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let v: f64 = x.iter().zip(&ranks).filter(|(xi, _)| **xi > 0.0).map(|(_, r)| r).sum();
    let exact = match method {
        PMethod::Auto => m <= EXACT_MAX,
        PMethod::Exact => true,
        PMethod::Normal => false,
    };
    let p_value = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = doubled_counts(&doubled);
        let total: f64 = counts.iter().sum();
        let v2 = (2.0 * v).round() as usize;
        let upper: f64 = counts[v2..].iter().sum::<f64>() / total;
        let lower: f64 = counts[..=v2].iter().sum::<f64>() / total;
        match alternative {
            Alternative::Greater => upper,
            Alternative::Less => lower,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        }
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
        let sd = (mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - ties / 48.0).sqrt();
        if sd == 0.0 {
            1.0
        } else {
            let diff = v - mean;
            match alternative {
                Alternative::Greater => normal_cdf(-(diff - 0.5) / sd),
                Alternative::Less => normal_cdf((diff + 0.5) / sd),
                Alternative::TwoSided => {
                    let z = (diff - 0.5 * diff.signum()) / sd;
                    (2.0 * normal_cdf(-z.abs())).min(1.0)
                }
            }
        }
    };

    let (estimate, conf_lower, conf_upper) = if m == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        x.sort_by(f64::total_cmp);
        let big_m = m * (m + 1) / 2;
        let est = if big_m % 2 == 1 {
            kth_walsh(&x, big_m.div_ceil(2))
        } else {
            0.5 * (kth_walsh(&x, big_m / 2) + kth_walsh(&x, big_m / 2 + 1))
        };
        let tail = match alternative {
            Alternative::TwoSided => alpha / 2.0,
            _ => alpha,
        };
        let k = if m <= EXACT_MAX {
            qsignrank(tail, m).max(1)
        } else {
            let mf = m as f64;
            let sd = (mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0).sqrt();
            ((big_m as f64 / 2.0 - normal_quantile(1.0 - tail) * sd).floor() as usize).max(1)
        }
        .min(big_m);
        let lower = kth_walsh(&x, k);
        let upper = kth_walsh(&x, big_m + 1 - k);
        match alternative {
            Alternative::TwoSided => (est, lower, upper),
            Alternative::Greater => (est, lower, f64::INFINITY),
            Alternative::Less => (est, f64::NEG_INFINITY, upper),
        }
    };
    SignedRank { v, m, p_value, exact, estimate, conf_lower, conf_upper }
}
