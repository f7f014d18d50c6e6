//! Logic sampling on discrete belief networks, with a-priori upper and lower
//! bounds on the number of trials needed before the estimates carry an
//! interval-error guarantee.
//!
//! The guarantee composes two confidences. Running at least
//! `N = ceil(1 / (4 (1 - delta) alpha^2))` successful trials makes
//! `P(|estimate - posterior| <= alpha) >= delta`; running `g_upper(sigma, p', N)`
//! total trials, where `p'` lower-bounds the probability of the findings,
//! makes `P(K > N) >= sigma`. Together they deliver `omega = delta * sigma`.
//!
//! - [`model`]: networks, evidence, exact enumeration, and the `p'`/`p*` bounds
//! - [`planner`]: required successes, binomial tails, normal approximations,
//!   and the trial-count searches
//! - [`sampler`]: forward simulation, scoring, and adaptive re-planning
//! - [`harness`]: sweeps and empirical coverage checks
//! - [`cli`]: the `lsras` command-line workflows

pub mod cli;
pub mod harness;
pub mod model;
pub mod planner;
pub mod sampler;
