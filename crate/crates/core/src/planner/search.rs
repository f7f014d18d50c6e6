use serde::Serialize;

use super::binomial::f_prime_raw;
use super::{
    check_open_unit, ConvergencePlan, PlanError, BINOMIAL_SLACK_COEFF, MAX_TRIALS,
    NORMAL_APPROX_SLACK, SIGMA_CAP_CONSTANT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// When the default bracket `[N, ceil(N^2/p)]` cannot satisfy the
    /// predicate, keep doubling its upper end instead of failing.
    pub expand_bracket: bool,
    /// Largest upper end the expansion may reach.
    pub expansion_limit: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            expand_bracket: false,
            expansion_limit: MAX_TRIALS,
        }
    }
}

impl SearchOptions {
    pub fn expanding() -> Self {
        SearchOptions {
            expand_bracket: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSearch {
    pub trials: u64,
    /// `[low, high]` actually searched.
    pub bracket: [u64; 2],
    pub expanded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy)]
struct Predicate {
    side: Side,
    sigma: f64,
    p: f64,
    q: f64,
    required: u64,
}

impl Predicate {
    /// `n <= N` can never yield more than N successes, so those points fail
    /// regardless of the approximation.
    fn holds(&self, n: u64) -> bool {
        if n <= self.required {
            return false;
        }
        let nf = n as f64;
        let binomial_slack = BINOMIAL_SLACK_COEFF / (nf * self.p * self.q).sqrt();
        let f = f_prime_raw(nf, self.p, self.q, self.required as f64);
        match self.side {
            Side::Upper => f <= 1.0 - self.sigma - binomial_slack - NORMAL_APPROX_SLACK,
            Side::Lower => f <= 1.0 - self.sigma + binomial_slack + NORMAL_APPROX_SLACK,
        }
    }
}

/// Smallest `n` in `(lo, hi]` where `pred` holds, given `pred(lo)` false and
/// `pred(hi)` true.
fn bisect(pred: &Predicate, mut lo: u64, mut hi: u64) -> u64 {
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred.holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn check_p(p: f64) -> Result<(), PlanError> {
    if p == 0.0 {
        return Err(PlanError::ZeroProbability);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(PlanError::OutOfRange {
            name: "p",
            value: p,
            range: "(0, 1]",
        });
    }
    Ok(())
}

fn default_high(p: f64, required: u64) -> u64 {
    let n = required as f64;
    let high = (n * n / p).ceil();
    if high >= MAX_TRIALS as f64 {
        MAX_TRIALS
    } else {
        (high as u64).max(required)
    }
}

/// Largest `sigma` the default bracket can certify:
/// `0.9995 - 0.14 / (N sqrt(q)) - f'(ceil(N^2/p), p, N)`.
///
/// The constant is `1 - 5.0e-4`, matching the normal-approximation slack of
/// the search predicate. Values at or below zero mean no `sigma` is
/// certifiable without expanding the bracket. With `p = 1` success is
/// certain and the cap is 1.
pub fn sigma_cap(p: f64, required: u64) -> Result<f64, PlanError> {
    check_p(p)?;
    if p == 1.0 {
        return Ok(1.0);
    }
    if required == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let q = 1.0 - p;
    let high = default_high(p, required) as f64;
    let n = required as f64;
    Ok(SIGMA_CAP_CONSTANT - BINOMIAL_SLACK_COEFF / (n * q.sqrt()) - f_prime_raw(high, p, q, n))
}

/// Upper bound on the number of trials that makes `P(K > N) >= sigma` when
/// each trial succeeds with probability `p`.
pub fn g_upper(sigma: f64, p: f64, required: u64) -> Result<u64, PlanError> {
    g_upper_with(sigma, p, required, SearchOptions::default()).map(|s| s.trials)
}

pub fn g_upper_with(
    sigma: f64,
    p: f64,
    required: u64,
    opts: SearchOptions,
) -> Result<TrialSearch, PlanError> {
    check_open_unit("sigma", sigma)?;
    check_p(p)?;
    if p == 1.0 {
        return Ok(TrialSearch {
            trials: required + 1,
            bracket: [required, required + 1],
            expanded: false,
        });
    }
    let pred = Predicate {
        side: Side::Upper,
        sigma,
        p,
        q: 1.0 - p,
        required,
    };
    let cap = sigma_cap(p, required)?;
    let mut high = default_high(p, required);
    let mut expanded = false;
    if !(sigma <= cap && pred.holds(high)) {
        if !opts.expand_bracket {
            return Err(PlanError::SigmaAboveCap { sigma, cap });
        }
        (high, expanded) = expand(&pred, high, opts.expansion_limit)?;
    }

    let n = bisect(&pred, required, high);
    if pred.holds(n - 1) || !pred.holds(n) {
        return Err(PlanError::NonMonotone { n });
    }
    Ok(TrialSearch {
        trials: n,
        bracket: [required, high],
        expanded,
    })
}

/// Lower bound on the number of trials needed for `P(K > N) >= sigma`.
pub fn g_lower(sigma: f64, p: f64, required: u64) -> Result<u64, PlanError> {
    g_lower_with(sigma, p, required, SearchOptions::default()).map(|s| s.trials)
}

/// Every `n` where the relaxed predicate fails has exact `P(K > N) < sigma`,
/// so one past the last failing point is a valid lower bound. The failing
/// region need not start at `N`: when `N p` is small the slack term exceeds
/// `sigma` just above `N`. Points `N + 2^k` are probed to locate the last
/// failing region before bisecting; a region narrower than the probe
/// spacing falls back to the first transition, which is still sound.
pub fn g_lower_with(
    sigma: f64,
    p: f64,
    required: u64,
    opts: SearchOptions,
) -> Result<TrialSearch, PlanError> {
    check_open_unit("sigma", sigma)?;
    check_p(p)?;
    if p == 1.0 {
        return Ok(TrialSearch {
            trials: required + 1,
            bracket: [required, required + 1],
            expanded: false,
        });
    }
    let pred = Predicate {
        side: Side::Lower,
        sigma,
        p,
        q: 1.0 - p,
        required,
    };
    let mut high = default_high(p, required);
    let mut expanded = false;
    if !pred.holds(high) {
        if !opts.expand_bracket {
            return Err(PlanError::LowerUnsatisfiable { sigma, high });
        }
        (high, expanded) = expand(&pred, high, opts.expansion_limit)?;
    }

    let mut last_fail = required;
    let mut first_hold_after = None;
    let mut step = 1u64;
    while let Some(probe) = required.checked_add(step).filter(|&x| x < high) {
        if pred.holds(probe) {
            first_hold_after.get_or_insert(probe);
        } else {
            last_fail = probe;
            first_hold_after = None;
        }
        step = step.saturating_mul(2);
    }

    let n = bisect(&pred, last_fail, first_hold_after.unwrap_or(high));
    if pred.holds(n - 1) || !pred.holds(n) {
        return Err(PlanError::NonMonotone { n });
    }
    Ok(TrialSearch {
        trials: n,
        bracket: [required, high],
        expanded,
    })
}

fn expand(pred: &Predicate, mut high: u64, limit: u64) -> Result<(u64, bool), PlanError> {
    high = high.max(1);
    while !pred.holds(high) {
        if high >= limit {
            return Err(PlanError::BracketExhausted { limit });
        }
        high = high.saturating_mul(2).min(limit);
    }
    Ok((high, true))
}

/// Additional trials needed after `successes` of `trials` have been
/// observed, so that the remaining requirement `K_additional > N - k` holds
/// with probability `sigma` when each new trial succeeds with `p_bound`.
/// The bracket is expanded as needed, since the remaining requirement can
/// be small enough that the default bracket certifies nothing.
pub fn replan(
    plan: &ConvergencePlan,
    p_bound: f64,
    successes: u64,
    trials: u64,
) -> Result<u64, PlanError> {
    if successes > trials {
        return Err(PlanError::OutOfRange {
            name: "successes",
            value: successes as f64,
            range: "successes <= trials",
        });
    }
    if successes > plan.n_required {
        return Ok(0);
    }
    let remaining = plan.n_required - successes;
    g_upper_with(plan.sigma, p_bound, remaining, SearchOptions::expanding()).map(|s| s.trials)
}
