//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped, absolute differences are ranked with
//! average ranks on ties, and `W+` is the rank sum of positive differences.
//! For up to [`EXACT_MAX_N`] pairs the null distribution of `W+` over all
//! `2^n` sign assignments is counted exactly; larger samples use the normal
//! approximation with tie correction and a continuity correction of 1/2.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
/// Fewest non-zero differences accepted.
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_two_sided: f64,
    /// `P(W+ >= observed)`: evidence that `a` tends to exceed `b`.
    pub p_greater: f64,
    /// `P(W+ <= observed)`: evidence that `a` tends to fall below `b`.
    pub p_less: f64,
    pub method: Method,
    /// Every difference was zero; the test is undefined and p is reported as 1.
    pub all_zero: bool,
}

/// Average ranks of `|d|` over the non-zero differences, with their signs.
pub fn signed_ranks(diffs: &[f64]) -> Vec<(f64, bool)> {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j + 2) as f64 / 2.0;
        for d in &nz[i..=j] {
            out.push((rank, *d > 0.0));
        }
        i = j + 1;
    }
    out
}

/// `(P(W+ >= w_plus), P(W+ <= w_plus))` under the exact null, counting
/// signed subsets. Ranks must be multiples of 1/2.
pub fn exact_tail_probabilities(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[s] = number of sign assignments with 2*W+ = s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let target = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let ge: u64 = counts[target.min(total + 1)..].iter().sum();
    let le: u64 = counts[..=target.min(total)].iter().sum();
    (ge as f64 / all, le as f64 / all)
}

/// Normal-approximation counterpart of [`exact_tail_probabilities`].
pub fn normal_tail_probabilities(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ge = std_normal.sf((w_plus - mean - 0.5) / sd);
    let le = std_normal.cdf((w_plus - mean + 0.5) / sd);
    (ge.min(1.0), le.min(1.0))
}

/// Paired signed-rank test of `a` against `b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::config(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::validation("paired samples contain non-finite values"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let ranked = signed_ranks(&diffs);
    let n = ranked.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_two_sided: 1.0,
            p_greater: 1.0,
            p_less: 1.0,
            method: Method::Exact,
            all_zero: true,
        });
    }
    if n < MIN_PAIRS {
        return Err(Error::validation(format!(
            "signed-rank test needs at least {MIN_PAIRS} non-zero differences, got {n}"
        )));
    }
    let w_plus: f64 = ranked.iter().filter(|(_, pos)| *pos).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let ranks: Vec<f64> = ranked.iter().map(|(r, _)| *r).collect();
    let (method, (p_greater, p_less)) = if n <= EXACT_MAX_N {
        (Method::Exact, exact_tail_probabilities(&ranks, w_plus))
    } else {
        (Method::Normal, normal_tail_probabilities(&ranks, w_plus))
    };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        p_greater,
        p_less,
        method,
        all_zero: false,
    })
}
