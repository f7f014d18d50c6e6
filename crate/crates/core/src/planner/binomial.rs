use statrs::function::factorial::ln_binomial;

use super::normal::{normal_cdf_approx, normal_cdf_ref};
use super::PlanError;

/// Exact `P(K <= big_n)` for `K ~ Binomial(n, p)`.
///
/// The pmf is evaluated once in log space at an anchor (the mode, or
/// `big_n` if smaller) and the remaining terms follow from the ratio
/// recurrence, walking away from the anchor so every step shrinks.
pub fn binom_tail(n: u64, p: f64, big_n: u64) -> f64 {
    if big_n >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
    let anchor = big_n.min(mode);
    let ln_pmf =
        ln_binomial(n, anchor) + anchor as f64 * p.ln() + (n - anchor) as f64 * (-p).ln_1p();
    let first = ln_pmf.exp();

    let mut sum = first;
    let down = q / p;
    let mut t = first;
    for i in (1..=anchor).rev() {
        t *= i as f64 / (n - i + 1) as f64 * down;
        if t == 0.0 {
            break;
        }
        sum += t;
    }
    let up = p / q;
    let mut t = first;
    for i in anchor..big_n {
        t *= (n - i) as f64 / (i + 1) as f64 * up;
        sum += t;
    }
    sum.clamp(0.0, 1.0)
}

fn check(n: u64, p: f64) -> Result<(), PlanError> {
    if n == 0 {
        return Err(PlanError::OutOfRange {
            name: "n",
            value: 0.0,
            range: "n >= 1",
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(PlanError::OutOfRange {
            name: "p",
            value: p,
            range: "(0, 1) for a non-degenerate variance",
        });
    }
    Ok(())
}

/// Continuity-corrected normal approximation to [`binom_tail`] using the
/// reference CDF.
pub fn f_hat(n: u64, p: f64, big_n: u64) -> Result<f64, PlanError> {
    check(n, p)?;
    Ok(normal_tail(
        normal_cdf_ref,
        n as f64,
        p,
        1.0 - p,
        big_n as f64,
    ))
}

/// As [`f_hat`] but through the four-coefficient CDF approximation; this is
/// the quantity the trial-count searches evaluate.
pub fn f_prime(n: u64, p: f64, big_n: u64) -> Result<f64, PlanError> {
    check(n, p)?;
    Ok(f_prime_raw(n as f64, p, 1.0 - p, big_n as f64))
}

pub(crate) fn f_prime_raw(n: f64, p: f64, q: f64, big_n: f64) -> f64 {
    normal_tail(normal_cdf_approx, n, p, q, big_n)
}

fn normal_tail(cdf: fn(f64) -> f64, n: f64, p: f64, q: f64, big_n: f64) -> f64 {
    let sd = (n * p * q).sqrt();
    let mean = n * p;
    let upper = (big_n - mean + 0.5) / sd;
    let lower = (-mean - 0.5) / sd;
    (cdf(upper) - cdf(lower)).clamp(0.0, 1.0)
}
