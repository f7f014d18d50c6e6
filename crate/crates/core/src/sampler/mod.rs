//! Logic sampling: forward-simulate every node in topological order, keep
//! the trials that agree with the findings, and estimate posteriors by
//! outcome frequency among them.

mod stream;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    evidence_prob_lower, labelled_distributions, Evidence, JointAssignment, Network,
};
use crate::planner::{g_upper, replan, ConvergencePlan, PlanError};

use stream::TrialStream;
pub use stream::{SeedSpec, STREAM_ID};

const CHUNK: u64 = 4096;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("adaptive sampling needs mode `conservative` or `empirical`")]
    NotAdaptive,
    #[error("batch size must be at least 1")]
    ZeroBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// A fixed number of trials.
    Fixed,
    /// Batches, re-planned with the a-priori lower bound on P(findings).
    Conservative,
    /// Batches, re-planned with the observed success rate. Heuristic.
    Empirical,
}

/// One re-planning event of an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanStep {
    pub trials_run: u64,
    pub successes: u64,
    pub p_bound: f64,
    pub additional: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingResult {
    pub seed: SeedSpec,
    pub mode: SamplingMode,
    pub n_total: u64,
    pub k_success: u64,
    /// `tallies[node][outcome]` over successful trials only.
    pub tallies: Vec<Vec<u64>>,
    /// `tallies / k_success`; `None` when no trial succeeded.
    pub estimates: Option<Vec<Vec<f64>>>,
    pub plan_history: Vec<PlanStep>,
    /// A-priori trial count `g_upper(sigma, p', N)`, when a plan was given.
    pub planned_trials: Option<u64>,
    pub successes_required: Option<u64>,
    pub guarantee_met_a_priori: bool,
    pub heuristic: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SamplingMetadata {
    pub seed: u64,
    pub stream: &'static str,
    pub mode: SamplingMode,
}

#[derive(Debug, Serialize)]
pub struct SamplingReport {
    pub metadata: SamplingMetadata,
    pub n_total: u64,
    pub k_success: u64,
    pub estimates_defined: bool,
    pub estimates: Option<IndexMap<String, IndexMap<String, f64>>>,
    pub tallies: IndexMap<String, IndexMap<String, u64>>,
    pub plan_history: Vec<PlanStep>,
    pub planned_trials: Option<u64>,
    #[serde(rename = "N")]
    pub successes_required: Option<u64>,
    pub successes_exceed_required: Option<bool>,
    pub guarantee_met_a_priori: bool,
    pub heuristic: bool,
    pub warnings: Vec<String>,
}

impl SamplingResult {
    fn from_tally(seed: SeedSpec, mode: SamplingMode, n_total: u64, tally: Tally) -> Self {
        let Tally { successes, counts } = tally;
        let estimates = (successes > 0).then(|| {
            counts
                .iter()
                .map(|c| c.iter().map(|&x| x as f64 / successes as f64).collect())
                .collect()
        });
        let mut warnings = Vec::new();
        if successes == 0 {
            warnings.push("no successful trials: estimates are undefined".to_string());
        }
        SamplingResult {
            seed,
            mode,
            n_total,
            k_success: successes,
            tallies: counts,
            estimates,
            plan_history: Vec::new(),
            planned_trials: None,
            successes_required: None,
            guarantee_met_a_priori: false,
            heuristic: mode == SamplingMode::Empirical,
            warnings,
        }
    }

    /// Records the a-priori plan: the guarantee holds at the start iff at
    /// least `planned_trials` trials were run. Reaching `K > N` is still
    /// not assured by that alone.
    pub fn with_plan(mut self, planned_trials: u64, successes_required: u64) -> Self {
        self.planned_trials = Some(planned_trials);
        self.successes_required = Some(successes_required);
        self.guarantee_met_a_priori = self.n_total >= planned_trials;
        self
    }

    pub fn estimate(&self, node: usize, outcome: usize) -> Option<f64> {
        self.estimates.as_ref().map(|e| e[node][outcome])
    }

    pub fn report(&self, net: &Network) -> SamplingReport {
        let tallies = net
            .nodes()
            .iter()
            .zip(&self.tallies)
            .map(|(n, c)| {
                (
                    n.id.clone(),
                    n.outcomes.iter().cloned().zip(c.iter().copied()).collect(),
                )
            })
            .collect();
        SamplingReport {
            metadata: SamplingMetadata {
                seed: self.seed.seed,
                stream: self.seed.stream_id(),
                mode: self.mode,
            },
            n_total: self.n_total,
            k_success: self.k_success,
            estimates_defined: self.estimates.is_some(),
            estimates: self
                .estimates
                .as_ref()
                .map(|e| labelled_distributions(net, e)),
            tallies,
            plan_history: self.plan_history.clone(),
            planned_trials: self.planned_trials,
            successes_required: self.successes_required,
            successes_exceed_required: self.successes_required.map(|n| self.k_success > n),
            guarantee_met_a_priori: self.guarantee_met_a_priori,
            heuristic: self.heuristic,
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tally {
    successes: u64,
    counts: Vec<Vec<u64>>,
}

impl Tally {
    fn zero(net: &Network) -> Self {
        Tally {
            successes: 0,
            counts: net
                .nodes()
                .iter()
                .map(|n| vec![0; n.cardinality()])
                .collect(),
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.successes += other.successes;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

/// Adaptive loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptiveConfig {
    pub mode: SamplingMode,
    /// Trials per batch; defaults to [`default_batch`].
    pub batch: Option<u64>,
    /// Operator cap on total trials.
    pub max_trials: Option<u64>,
}

pub fn default_batch(n_required: u64) -> u64 {
    (n_required / 100).max(64)
}

/// Logic sampler bound to a network, evidence, and seed.
#[derive(Debug, Clone)]
pub struct LogicSampler<'a> {
    net: &'a Network,
    evidence: &'a Evidence,
    seed: SeedSpec,
    key: [u8; 32],
    parallel: bool,
}

impl<'a> LogicSampler<'a> {
    pub fn new(net: &'a Network, evidence: &'a Evidence, seed: SeedSpec) -> Self {
        LogicSampler {
            net,
            evidence,
            seed,
            key: seed.key(),
            parallel: true,
        }
    }

    /// Parallel execution only changes scheduling; results are identical.
    pub fn parallel(mut self, enabled: bool) -> Self {
        self.parallel = enabled;
        self
    }

    pub fn simulate_trial(&self, trial: u64) -> JointAssignment {
        let mut buf = vec![0; self.net.len()];
        self.simulate_into(trial, &mut buf);
        JointAssignment(buf)
    }

    fn simulate_into(&self, trial: u64, assignment: &mut [usize]) {
        let mut stream = TrialStream::new(self.key, trial);
        for &node in self.net.order() {
            let u = stream.next_uniform();
            assignment[node] = draw(self.net.cpt_row(node, assignment), u);
        }
    }

    fn tally_range(&self, start: u64, end: u64) -> Tally {
        let mut tally = Tally::zero(self.net);
        let mut buf = vec![0; self.net.len()];
        let findings = self.evidence.findings();
        for trial in start..end {
            self.simulate_into(trial, &mut buf);
            if findings.iter().all(|f| buf[f.node] == f.outcome) {
                tally.successes += 1;
                for (c, &o) in tally.counts.iter_mut().zip(&buf) {
                    c[o] += 1;
                }
            }
        }
        tally
    }

    fn tally(&self, start: u64, end: u64) -> Tally {
        let chunks: Vec<(u64, u64)> = (start..end)
            .step_by(CHUNK as usize)
            .map(|a| (a, (a + CHUNK).min(end)))
            .collect();
        let zero = || Tally::zero(self.net);
        if self.parallel && chunks.len() > 1 {
            chunks
                .par_iter()
                .map(|&(a, b)| self.tally_range(a, b))
                .reduce(zero, Tally::merge)
        } else {
            chunks
                .iter()
                .map(|&(a, b)| self.tally_range(a, b))
                .fold(zero(), Tally::merge)
        }
    }

    /// Runs trials `0..n_trials` and scores the successful ones.
    pub fn run(&self, n_trials: u64) -> SamplingResult {
        SamplingResult::from_tally(
            self.seed,
            SamplingMode::Fixed,
            n_trials,
            self.tally(0, n_trials),
        )
    }

    /// Runs in batches, re-planning after each one, until more than `N`
    /// successes are seen or the plan says no further trials are needed.
    ///
    /// Conservative mode never lets the running total exceed the a-priori
    /// count `g_upper(sigma, p', N)`: each re-plan can only shorten it.
    /// Empirical mode plans with the observed rate `k/m` (falling back to
    /// `p'` while `k = 0`) and may run longer; it is marked heuristic.
    pub fn run_adaptive(
        &self,
        plan: &ConvergencePlan,
        cfg: AdaptiveConfig,
    ) -> Result<SamplingResult, SamplerError> {
        if cfg.mode == SamplingMode::Fixed {
            return Err(SamplerError::NotAdaptive);
        }
        let batch = cfg.batch.unwrap_or_else(|| default_batch(plan.n_required));
        if batch == 0 {
            return Err(SamplerError::ZeroBatch);
        }
        let p_lower = evidence_prob_lower(self.net, self.evidence);
        if p_lower == 0.0 {
            return Err(PlanError::ZeroProbability.into());
        }
        let required = plan.n_required;
        let initial = g_upper(plan.sigma, p_lower, required)?;
        let cap = cfg.max_trials.unwrap_or(u64::MAX);

        let mut history = vec![PlanStep {
            trials_run: 0,
            successes: 0,
            p_bound: p_lower,
            additional: initial,
        }];
        let mut budget = initial;
        let mut tally = Tally::zero(self.net);
        let mut m = 0u64;
        while tally.successes <= required && m < budget.min(cap) {
            let step = batch.min(budget - m).min(cap - m);
            tally = tally.merge(self.tally(m, m + step));
            m += step;
            let k = tally.successes;
            let p_bound = match cfg.mode {
                SamplingMode::Empirical if k > 0 => k as f64 / m as f64,
                _ => p_lower,
            };
            let additional = replan(plan, p_bound, k, m)?;
            history.push(PlanStep {
                trials_run: m,
                successes: k,
                p_bound,
                additional,
            });
            budget = match cfg.mode {
                SamplingMode::Conservative => budget.min(m + additional),
                _ => m.saturating_add(additional),
            };
        }

        let mut result =
            SamplingResult::from_tally(self.seed, cfg.mode, m, tally).with_plan(initial, required);
        result.plan_history = history;
        if m >= cap && result.k_success <= required {
            result
                .warnings
                .push(format!("stopped at the operator cap of {cap} trials"));
        }
        Ok(result)
    }
}

/// Inverse-CDF draw over the row's cumulative sums. Zero-probability
/// outcomes are never returned, even when rounding leaves the final
/// cumulative sum just below 1.
fn draw(row: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = j;
            if u < cum {
                return j;
            }
        }
    }
    last
}

pub fn simulate_trial(net: &Network, seed: SeedSpec, trial: u64) -> JointAssignment {
    LogicSampler::new(net, &Evidence::empty(), seed).simulate_trial(trial)
}

pub fn run(net: &Network, ev: &Evidence, n_trials: u64, seed: SeedSpec) -> SamplingResult {
    LogicSampler::new(net, ev, seed).run(n_trials)
}

pub fn run_adaptive(
    net: &Network,
    ev: &Evidence,
    plan: &ConvergencePlan,
    seed: SeedSpec,
    cfg: AdaptiveConfig,
) -> Result<SamplingResult, SamplerError> {
    LogicSampler::new(net, ev, seed).run_adaptive(plan, cfg)
}
