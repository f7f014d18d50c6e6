use indexmap::IndexMap;
use serde::Serialize;

use super::{Evidence, ModelError, Network};

/// Default cap on the joint state count accepted by [`exact_query`].
pub const DEFAULT_STATE_CAP: u64 = 1 << 24;

/// Exact P(findings) and posterior marginals by full joint enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub evidence_prob: f64,
    /// `posteriors[node][outcome]`; `None` when `evidence_prob` is zero.
    pub posteriors: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct ExactReport {
    pub evidence_prob: f64,
    pub posteriors_defined: bool,
    pub posteriors: Option<IndexMap<String, IndexMap<String, f64>>>,
}

impl ExactResult {
    pub fn posterior(&self, node: usize, outcome: usize) -> Option<f64> {
        self.posteriors.as_ref().map(|p| p[node][outcome])
    }

    pub fn report(&self, net: &Network) -> ExactReport {
        ExactReport {
            evidence_prob: self.evidence_prob,
            posteriors_defined: self.posteriors.is_some(),
            posteriors: self
                .posteriors
                .as_ref()
                .map(|post| labelled_distributions(net, post)),
        }
    }
}

pub(crate) fn labelled_distributions(
    net: &Network,
    values: &[Vec<f64>],
) -> IndexMap<String, IndexMap<String, f64>> {
    net.nodes()
        .iter()
        .zip(values)
        .map(|(node, dist)| {
            let m = node
                .outcomes
                .iter()
                .cloned()
                .zip(dist.iter().copied())
                .collect();
            (node.id.clone(), m)
        })
        .collect()
}

pub fn exact_query(net: &Network, ev: &Evidence) -> Result<ExactResult, ModelError> {
    exact_query_capped(net, ev, DEFAULT_STATE_CAP)
}

/// Enumerates joint states depth-first in topological order, outcomes in
/// declaration order, so the summation order is fixed. Subtrees with zero
/// weight or contradicting a finding are skipped.
pub fn exact_query_capped(
    net: &Network,
    ev: &Evidence,
    cap: u64,
) -> Result<ExactResult, ModelError> {
    let states = net.joint_state_count();
    if states > cap as u128 {
        return Err(ModelError::StateCapExceeded { states, cap });
    }

    let mut walk = Enumeration {
        net,
        ev,
        assignment: vec![0; net.len()],
        total: 0.0,
        marginals: net
            .nodes()
            .iter()
            .map(|n| vec![0.0; n.cardinality()])
            .collect(),
    };
    walk.descend(0, 1.0);

    let Enumeration {
        total, marginals, ..
    } = walk;
    let posteriors = (total > 0.0).then(|| {
        marginals
            .into_iter()
            .map(|m| m.into_iter().map(|w| w / total).collect())
            .collect()
    });
    Ok(ExactResult {
        evidence_prob: total.min(1.0),
        posteriors,
    })
}

struct Enumeration<'a> {
    net: &'a Network,
    ev: &'a Evidence,
    assignment: Vec<usize>,
    total: f64,
    marginals: Vec<Vec<f64>>,
}

impl Enumeration<'_> {
    fn descend(&mut self, depth: usize, weight: f64) {
        let Some(&node) = self.net.order().get(depth) else {
            self.total += weight;
            for (m, &o) in self.marginals.iter_mut().zip(&self.assignment) {
                m[o] += weight;
            }
            return;
        };
        let row = self.net.cpt_row(node, &self.assignment).to_vec();
        let observed = self.ev.observed(node);
        for (o, &p) in row.iter().enumerate() {
            if p == 0.0 || observed.is_some_and(|x| x != o) {
                continue;
            }
            self.assignment[node] = o;
            self.descend(depth + 1, weight * p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Node;

    fn ab() -> Network {
        Network::new(vec![
            Node::new("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
            Node::new(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn chain_posterior_by_hand() {
        let net = ab();
        let ev = Evidence::new(&net, [("B", "t")]).unwrap();
        let r = exact_query(&net, &ev).unwrap();
        // 0.5*0.8 + 0.5*0.3
        assert!((r.evidence_prob - 0.55).abs() < 1e-15);
        assert!((r.posterior(0, 0).unwrap() - 8.0 / 11.0).abs() < 1e-15);
        assert_eq!(r.posterior(1, 0), Some(1.0));
    }

    #[test]
    fn empty_evidence_gives_priors() {
        let net = ab();
        let r = exact_query(&net, &Evidence::empty()).unwrap();
        assert_eq!(r.evidence_prob, 1.0);
        assert!((r.posterior(0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((r.posterior(1, 0).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn contradicted_evidence_is_flagged() {
        let net = Network::new(vec![
            Node::new("A", &["t", "f"], &[], vec![vec![1.0, 0.0]]),
            Node::new(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            ),
        ])
        .unwrap();
        let ev = Evidence::new(&net, [("B", "f")]).unwrap();
        let r = exact_query(&net, &ev).unwrap();
        assert_eq!(r.evidence_prob, 0.0);
        assert!(r.posteriors.is_none());
        assert!(!r.report(&net).posteriors_defined);
    }

    #[test]
    fn cap_is_enforced() {
        let nodes = (0..25)
            .map(|i| Node::new(format!("N{i}"), &["t", "f"], &[], vec![vec![0.5, 0.5]]))
            .collect();
        let net = Network::new(nodes).unwrap();
        let err = exact_query(&net, &Evidence::empty()).unwrap_err();
        assert!(matches!(err, ModelError::StateCapExceeded { states, .. } if states == 1 << 25));
        assert!(exact_query_capped(&ab(), &Evidence::empty(), 3).is_err());
        assert!(exact_query_capped(&ab(), &Evidence::empty(), 4).is_ok());
    }
}
