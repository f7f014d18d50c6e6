//! Empirical checks of the planning guarantees and the trial-count sweep
//! behind the trials-versus-p plots.

use std::io::Write;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    evidence_prob_lower, exact_query_capped, Evidence, ModelError, Network, DEFAULT_STATE_CAP,
};
use crate::planner::{
    binom_tail, f_hat, f_prime, g_lower, g_upper, required_successes, sigma_cap, ConvergencePlan,
    PlanError,
};
use crate::sampler::{LogicSampler, SeedSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("the findings have probability 0; posteriors are undefined")]
    ZeroEvidence,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma: f64,
    #[serde(rename = "N")]
    pub n_required: u64,
    pub p: f64,
    pub g_lower: Option<u64>,
    pub g_upper: Option<u64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub p: Vec<f64>,
    #[serde(rename = "N")]
    pub n_values: Vec<u64>,
    pub sigma: Vec<f64>,
}

impl Default for SweepGrid {
    /// N from alpha in {0.1, 0.05, 0.01} at delta = 0.95; 25 log-spaced p
    /// over [1e-4, 1]; sigma in {0.5, 0.9, 0.99}.
    fn default() -> Self {
        let n_values = [0.1, 0.05, 0.01]
            .iter()
            .map(|&a| required_successes(a, 0.95).expect("valid defaults"))
            .collect();
        SweepGrid {
            p: log_grid(1e-4, 1.0, 25),
            n_values,
            sigma: vec![0.5, 0.9, 0.99],
        }
    }
}

/// `points` values evenly spaced in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub grid: SweepGrid,
    /// Sorted by (sigma, N, p).
    pub rows: Vec<SweepRow>,
}

/// Evaluates both trial-count bounds over the full grid cross product.
/// Cells where `sigma` exceeds the cap keep `g_upper` empty and are marked
/// infeasible.
pub fn sweep(grid: &SweepGrid) -> Result<SweepTable, HarnessError> {
    let cells: Vec<(f64, u64, f64)> = grid
        .sigma
        .iter()
        .flat_map(|&s| {
            grid.n_values
                .iter()
                .flat_map(move |&n| grid.p.iter().map(move |&p| (s, n, p)))
        })
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(sigma, n, p)| -> Result<SweepRow, PlanError> {
            let feasible = sigma <= sigma_cap(p, n)?;
            let upper = if feasible {
                Some(g_upper(sigma, p, n)?)
            } else {
                None
            };
            let lower = match g_lower(sigma, p, n) {
                Ok(v) => Some(v),
                Err(PlanError::LowerUnsatisfiable { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                sigma,
                n_required: n,
                p,
                g_lower: lower,
                g_upper: upper,
                feasible,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.n_required.cmp(&b.n_required))
            .then(a.p.total_cmp(&b.p))
    });
    Ok(SweepTable {
        grid: grid.clone(),
        rows,
    })
}

impl SweepTable {
    /// Columns: `sigma,N,p,g_lower,g_upper,feasible`. Missing bounds are
    /// empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sigma", "N", "p", "g_lower", "g_upper", "feasible"])?;
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.sigma.to_string(),
                r.n_required.to_string(),
                r.p.to_string(),
                opt(r.g_lower),
                opt(r.g_upper),
                u8::from(r.feasible).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("in-memory csv write cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Empirical coverage of the end-to-end guarantee over independent
/// replications of the fixed-count protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub replications: u64,
    pub trials_per_replication: u64,
    pub alpha: f64,
    pub target_omega: f64,
    pub target_sigma: f64,
    #[serde(rename = "N")]
    pub n_required: u64,
    pub p_lower: f64,
    pub evidence_prob: f64,
    /// Fraction of replications with every outcome of the node within
    /// `alpha` of the exact posterior.
    pub per_node: IndexMap<String, f64>,
    /// Fraction with all nodes covered at once. Reported only.
    pub all_nodes: f64,
    /// Fraction of replications with `K > N`.
    pub success_count: f64,
    pub omega_threshold: f64,
    pub sigma_threshold: f64,
    pub pass: bool,
}

/// `target - 3 sqrt(target (1 - target) / R)`.
pub fn coverage_threshold(target: f64, replications: u64) -> f64 {
    target - 3.0 * (target * (1.0 - target) / replications as f64).sqrt()
}

pub fn verify_guarantee(
    net: &Network,
    ev: &Evidence,
    plan: &ConvergencePlan,
    replications: u64,
    seed: SeedSpec,
) -> Result<CoverageReport, HarnessError> {
    verify_guarantee_capped(net, ev, plan, replications, seed, DEFAULT_STATE_CAP)
}

pub fn verify_guarantee_capped(
    net: &Network,
    ev: &Evidence,
    plan: &ConvergencePlan,
    replications: u64,
    seed: SeedSpec,
    state_cap: u64,
) -> Result<CoverageReport, HarnessError> {
    let exact = exact_query_capped(net, ev, state_cap)?;
    let posteriors = exact
        .posteriors
        .as_ref()
        .ok_or(HarnessError::ZeroEvidence)?;
    let p_lower = evidence_prob_lower(net, ev);
    if p_lower == 0.0 {
        return Err(PlanError::ZeroProbability.into());
    }
    let trials = g_upper(plan.sigma, p_lower, plan.n_required)?;

    let outcomes: Vec<(Vec<bool>, bool)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let result = LogicSampler::new(net, ev, seed.child(r))
                .parallel(false)
                .run(trials);
            let covered = match &result.estimates {
                None => vec![false; net.len()],
                Some(est) => est
                    .iter()
                    .zip(posteriors)
                    .map(|(e, mu)| e.iter().zip(mu).all(|(y, m)| (y - m).abs() <= plan.alpha))
                    .collect(),
            };
            (covered, result.k_success > plan.n_required)
        })
        .collect();

    let r = replications.max(1) as f64;
    let per_node: IndexMap<String, f64> = net
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let hits = outcomes.iter().filter(|(c, _)| c[i]).count();
            (n.id.clone(), hits as f64 / r)
        })
        .collect();
    let all_nodes = outcomes
        .iter()
        .filter(|(c, _)| c.iter().all(|&x| x))
        .count() as f64
        / r;
    let success_count = outcomes.iter().filter(|(_, s)| *s).count() as f64 / r;
    let omega_threshold = coverage_threshold(plan.omega, replications.max(1));
    let sigma_threshold = coverage_threshold(plan.sigma, replications.max(1));
    let pass = replications > 0
        && per_node.values().all(|&c| c >= omega_threshold)
        && success_count >= sigma_threshold;

    Ok(CoverageReport {
        replications,
        trials_per_replication: trials,
        alpha: plan.alpha,
        target_omega: plan.omega,
        target_sigma: plan.sigma,
        n_required: plan.n_required,
        p_lower,
        evidence_prob: exact.evidence_prob,
        per_node,
        all_nodes,
        success_count,
        omega_threshold,
        sigma_threshold,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: u64,
    pub p: f64,
    #[serde(rename = "N")]
    pub big_n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxErrorSummary {
    pub points: usize,
    /// max `|f_hat - f| sqrt(npq)`; must not exceed 0.14.
    pub max_scaled_hat_error: f64,
    pub worst_hat: Option<GridPoint>,
    /// max `|f' - f_hat|`; must not exceed 5.0e-4.
    pub max_prime_gap: f64,
    pub worst_prime: Option<GridPoint>,
    pub within_bounds: bool,
}

/// Fractions `(num, den)` of `n`, floored, giving the `N` values per `n`.
pub const QUARTERS: [(u64, u64); 5] = [(0, 4), (1, 4), (2, 4), (3, 4), (4, 4)];

pub fn default_scan_n() -> Vec<u64> {
    vec![10, 32, 100, 316, 1000, 3162, 10000]
}

pub fn default_scan_p() -> Vec<f64> {
    vec![0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95]
}

/// Compares both normal approximations against the exact binomial CDF
/// over `n_grid x p_grid x {floor(n * num / den)}`.
pub fn approx_error_scan(
    n_grid: &[u64],
    p_grid: &[f64],
    n_rule: &[(u64, u64)],
) -> Result<ApproxErrorSummary, PlanError> {
    let points: Vec<GridPoint> = n_grid
        .iter()
        .flat_map(|&n| {
            p_grid.iter().flat_map(move |&p| {
                n_rule.iter().map(move |&(num, den)| GridPoint {
                    n,
                    p,
                    big_n: n * num / den,
                })
            })
        })
        .collect();
    let errors = points
        .par_iter()
        .map(|pt| -> Result<(f64, f64), PlanError> {
            let exact = binom_tail(pt.n, pt.p, pt.big_n);
            let hat = f_hat(pt.n, pt.p, pt.big_n)?;
            let prime = f_prime(pt.n, pt.p, pt.big_n)?;
            let sd = (pt.n as f64 * pt.p * (1.0 - pt.p)).sqrt();
            Ok(((hat - exact).abs() * sd, (prime - hat).abs()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut summary = ApproxErrorSummary {
        points: points.len(),
        max_scaled_hat_error: 0.0,
        worst_hat: None,
        max_prime_gap: 0.0,
        worst_prime: None,
        within_bounds: true,
    };
    for (pt, &(hat_err, gap)) in points.iter().zip(&errors) {
        if summary.worst_hat.is_none() || hat_err > summary.max_scaled_hat_error {
            summary.max_scaled_hat_error = hat_err;
            summary.worst_hat = Some(*pt);
        }
        if summary.worst_prime.is_none() || gap > summary.max_prime_gap {
            summary.max_prime_gap = gap;
            summary.worst_prime = Some(*pt);
        }
    }
    summary.within_bounds = summary.max_scaled_hat_error <= 0.14 && summary.max_prime_gap <= 5.0e-4;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Node;

    #[test]
    fn default_grid_shape() {
        let g = SweepGrid::default();
        assert_eq!(g.n_values, vec![500, 2000, 50000]);
        assert_eq!(g.p.len(), 25);
        assert_eq!(g.p[0], 1e-4);
        assert_eq!(*g.p.last().unwrap(), 1.0);
        assert!((g.p[12] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sweep_rows_sorted_and_ordered() {
        let grid = SweepGrid {
            p: log_grid(1e-3, 1.0, 7),
            n_values: vec![4, 50, 500],
            sigma: vec![0.99, 0.5],
        };
        let t = sweep(&grid).unwrap();
        assert_eq!(t.rows.len(), 42);
        assert!(t.rows.windows(2).all(
            |w| (w[0].sigma, w[0].n_required, w[0].p) <= (w[1].sigma, w[1].n_required, w[1].p)
        ));
        for r in &t.rows {
            assert_eq!(r.feasible, r.sigma <= sigma_cap(r.p, r.n_required).unwrap());
            assert_eq!(r.feasible, r.g_upper.is_some());
            if let (Some(l), Some(u)) = (r.g_lower, r.g_upper) {
                assert!(l <= u);
            }
            if r.p == 1.0 {
                assert_eq!(r.g_upper, Some(r.n_required + 1));
            }
        }
        // N = 4 at sigma = 0.99 cannot be certified within [N, N^2/p]
        assert!(t.rows.iter().any(|r| !r.feasible));
    }

    #[test]
    fn csv_layout() {
        let grid = SweepGrid {
            p: vec![0.5, 1.0],
            n_values: vec![10],
            sigma: vec![0.5],
        };
        let csv = sweep(&grid).unwrap().to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("sigma,N,p,g_lower,g_upper,feasible"));
        assert_eq!(lines.last(), Some("0.5,10,1,11,11,1"));
    }

    #[test]
    fn scan_single_point() {
        let s = approx_error_scan(&[100], &[0.5], &[(2, 4)]).unwrap();
        assert_eq!(s.points, 1);
        assert!(s.max_scaled_hat_error / 5.0 <= 0.028);
        assert!(s.within_bounds);
    }

    #[test]
    fn scan_full_cdf_edge() {
        let s = approx_error_scan(&[10, 1000], &[0.3, 0.9], &[(4, 4)]).unwrap();
        assert!(s.within_bounds);
        for n in [10u64, 1000] {
            for p in [0.3, 0.9] {
                assert_eq!(binom_tail(n, p, n), 1.0);
                let bound = 0.14 / (n as f64 * p * (1.0 - p)).sqrt();
                assert!(f_hat(n, p, n).unwrap() >= 1.0 - bound);
            }
        }
    }

    #[test]
    fn deterministic_network_full_coverage() {
        let net = Network::new(vec![
            Node::new("A", &["t", "f"], &[], vec![vec![1.0, 0.0]]),
            Node::new(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ),
        ])
        .unwrap();
        let plan = ConvergencePlan::new(0.2, 0.8, 0.9).unwrap();
        let r = verify_guarantee(&net, &Evidence::empty(), &plan, 20, SeedSpec::new(3)).unwrap();
        assert!(r.per_node.values().all(|&c| c == 1.0));
        assert_eq!(r.all_nodes, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn zero_evidence_is_rejected() {
        let net =
            Network::new(vec![Node::new("A", &["t", "f"], &[], vec![vec![1.0, 0.0]])]).unwrap();
        let ev = Evidence::new(&net, [("A", "f")]).unwrap();
        let plan = ConvergencePlan::new(0.2, 0.8, 0.9).unwrap();
        assert!(matches!(
            verify_guarantee(&net, &ev, &plan, 5, SeedSpec::new(0)),
            Err(HarnessError::ZeroEvidence)
        ));
    }
}
