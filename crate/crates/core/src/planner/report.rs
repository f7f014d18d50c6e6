use serde::Serialize;

use super::search::{g_lower_with, g_upper_with, sigma_cap, SearchOptions};
use super::{
    ConvergencePlan, PlanError, BINOMIAL_SLACK_COEFF, NORMAL_APPROX_SLACK, SIGMA_CAP_CONSTANT,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackTerms {
    pub binomial_coefficient: f64,
    /// `0.14 / sqrt(npq)` at `n = g_upper`, `p = p_lower`.
    pub binomial_at_g_upper: Option<f64>,
    /// `0.14 / sqrt(npq)` at `n = g_lower`, `p = p_upper`.
    pub binomial_at_g_lower: Option<f64>,
    pub normal_approx: f64,
    pub sigma_cap_constant: f64,
}

/// Everything needed to reproduce a planning decision. `g_upper` is
/// evaluated at `p_lower` and `g_lower` at `p_upper`, so the pair brackets
/// the trial count for the unknown true evidence probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub alpha: f64,
    pub delta: f64,
    pub sigma: f64,
    pub omega: f64,
    #[serde(rename = "N")]
    pub n_required: u64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub g_upper: Option<u64>,
    pub g_lower: Option<u64>,
    /// Cap at `p_lower`; absent when `p_lower` is 0.
    pub sigma_cap: Option<f64>,
    pub bracket: Option<[u64; 2]>,
    pub bracket_lower: Option<[u64; 2]>,
    pub slack: SlackTerms,
    pub feasible: bool,
    pub infeasible_reason: Option<String>,
}

fn binomial_slack(n: u64, p: f64) -> Option<f64> {
    (p < 1.0).then(|| BINOMIAL_SLACK_COEFF / (n as f64 * p * (1.0 - p)).sqrt())
}

impl BoundsReport {
    /// Infeasibility (zero `p_lower`, `sigma` above the cap) is recorded in
    /// the report; only malformed probabilities are errors.
    pub fn compute(plan: &ConvergencePlan, p_lower: f64, p_upper: f64) -> Result<Self, PlanError> {
        for (name, p) in [("p_lower", p_lower), ("p_upper", p_upper)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PlanError::OutOfRange {
                    name,
                    value: p,
                    range: "[0, 1]",
                });
            }
        }
        let n = plan.n_required;
        let opts = SearchOptions::default();

        let (upper, cap, reason) = if p_lower == 0.0 {
            (None, None, Some(PlanError::ZeroProbability.to_string()))
        } else {
            let cap = sigma_cap(p_lower, n)?;
            match g_upper_with(plan.sigma, p_lower, n, opts) {
                Ok(s) => (Some(s), Some(cap), None),
                Err(e @ PlanError::SigmaAboveCap { .. }) => (None, Some(cap), Some(e.to_string())),
                Err(e) => return Err(e),
            }
        };
        let lower = if p_upper == 0.0 {
            None
        } else {
            match g_lower_with(plan.sigma, p_upper, n, opts) {
                Ok(s) => Some(s),
                Err(PlanError::LowerUnsatisfiable { .. }) => None,
                Err(e) => return Err(e),
            }
        };

        Ok(BoundsReport {
            alpha: plan.alpha,
            delta: plan.delta,
            sigma: plan.sigma,
            omega: plan.omega,
            n_required: n,
            p_lower,
            p_upper,
            g_upper: upper.map(|s| s.trials),
            g_lower: lower.map(|s| s.trials),
            sigma_cap: cap,
            bracket: upper.map(|s| s.bracket),
            bracket_lower: lower.map(|s| s.bracket),
            slack: SlackTerms {
                binomial_coefficient: BINOMIAL_SLACK_COEFF,
                binomial_at_g_upper: upper.and_then(|s| binomial_slack(s.trials, p_lower)),
                binomial_at_g_lower: lower.and_then(|s| binomial_slack(s.trials, p_upper)),
                normal_approx: NORMAL_APPROX_SLACK,
                sigma_cap_constant: SIGMA_CAP_CONSTANT,
            },
            feasible: upper.is_some(),
            infeasible_reason: reason,
        })
    }
}
