//! A-priori convergence planning: how many successful trials an
//! (alpha, delta) guarantee needs, and how many total trials make reaching
//! that count likely enough.

mod binomial;
mod normal;
mod report;
mod search;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::{binom_tail, f_hat, f_prime};
pub use normal::{normal_cdf_approx, normal_cdf_ref, PHI_APPROX_COEFFS};
pub use report::{BoundsReport, SlackTerms};
pub use search::{
    g_lower, g_lower_with, g_upper, g_upper_with, replan, sigma_cap, SearchOptions, TrialSearch,
};

/// Coefficient of the `0.14 / sqrt(npq)` bound on the error of the
/// continuity-corrected normal approximation to the binomial CDF.
pub const BINOMIAL_SLACK_COEFF: f64 = 0.14;
/// Allowance for replacing the exact normal CDF by its approximation at
/// both ends of the interval (2 x 2.5e-4).
pub const NORMAL_APPROX_SLACK: f64 = 5.0e-4;
/// Maximum absolute error of [`normal_cdf_approx`].
pub const PHI_APPROX_MAX_ERROR: f64 = 2.5e-4;
pub const SIGMA_CAP_CONSTANT: f64 = 1.0 - NORMAL_APPROX_SLACK;
/// Upper limit for any trial count handled here (exactly representable as f64).
pub const MAX_TRIALS: u64 = 1 << 53;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{name} = {value} is out of range; expected {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("the evidence probability bound is 0, so no trial count can be certified")]
    ZeroProbability,
    #[error("sigma = {sigma} exceeds the certifiable cap {cap} of the default search bracket")]
    SigmaAboveCap { sigma: f64, cap: f64 },
    #[error("no n in the default bracket (up to {high}) satisfies the lower-bound predicate for sigma = {sigma}")]
    LowerUnsatisfiable { sigma: f64, high: u64 },
    #[error("bracket expansion reached {limit} trials without satisfying the predicate")]
    BracketExhausted { limit: u64 },
    #[error("search predicate is not monotone near n = {n}")]
    NonMonotone { n: u64 },
    #[error("required successes overflow a 64-bit count")]
    Overflow,
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<(), PlanError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(PlanError::OutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}

/// Number of successful trials `N = ceil(1 / (4 (1 - delta) alpha^2))`
/// after which `P(|estimate - posterior| <= alpha) >= delta` by Chebyshev.
///
/// Evaluated in exact rational arithmetic on the shortest decimal form of
/// `alpha` and `delta` (the value as typed), so `0.1, 0.9` gives 250 and not
/// the 251 that their binary approximations would.
pub fn required_successes(alpha: f64, delta: f64) -> Result<u64, PlanError> {
    check_open_unit("alpha", alpha)?;
    check_open_unit("delta", delta)?;
    let a = decimal_rational(alpha);
    let d = decimal_rational(delta);
    let four = BigRational::from_integer(BigInt::from(4));
    let bound = (four * (BigRational::one() - d) * &a * &a).recip();
    bound
        .ceil()
        .to_integer()
        .to_u64()
        .ok_or(PlanError::Overflow)
}

/// Exact rational value of the shortest decimal string that round-trips to `x`.
fn decimal_rational(x: f64) -> BigRational {
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal digits");
    let shift = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    if shift >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, shift as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-shift) as usize))
    }
}

/// An (alpha, delta, sigma) request and what it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePlan {
    pub alpha: f64,
    pub delta: f64,
    pub sigma: f64,
    /// End-to-end confidence `delta * sigma`.
    pub omega: f64,
    #[serde(rename = "N")]
    pub n_required: u64,
}

impl ConvergencePlan {
    pub fn new(alpha: f64, delta: f64, sigma: f64) -> Result<Self, PlanError> {
        check_open_unit("sigma", sigma)?;
        let n_required = required_successes(alpha, delta)?;
        Ok(ConvergencePlan {
            alpha,
            delta,
            sigma,
            omega: delta * sigma,
            n_required,
        })
    }
}
