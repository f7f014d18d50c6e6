use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{ModelError, Network};

/// One observed outcome, as node and outcome indices into a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Finding {
    pub node: usize,
    pub outcome: usize,
}

/// Observed outcomes for a subset of nodes, validated against a network.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evidence {
    // sorted by node index
    findings: Vec<Finding>,
    labels: IndexMap<String, String>,
}

impl Evidence {
    pub fn empty() -> Self {
        Evidence::default()
    }

    pub fn new<'a, I>(net: &Network, findings: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut seen = HashSet::new();
        let mut resolved = Vec::new();
        let mut labels = IndexMap::new();
        for (id, outcome) in findings {
            let node = net
                .index_of(id)
                .ok_or_else(|| ModelError::UnknownNode(id.to_string()))?;
            if !seen.insert(node) {
                return Err(ModelError::DuplicateFinding(id.to_string()));
            }
            let o = net.node(node).outcome_index(outcome).ok_or_else(|| {
                ModelError::UnknownOutcome {
                    node: id.to_string(),
                    outcome: outcome.to_string(),
                }
            })?;
            resolved.push(Finding { node, outcome: o });
            labels.insert(id.to_string(), outcome.to_string());
        }
        resolved.sort_by_key(|f| f.node);
        Ok(Evidence {
            findings: resolved,
            labels,
        })
    }

    /// Parses `{"findings": {"<id>": "<outcome>", ...}}`. Repeated keys are
    /// rejected rather than silently collapsed.
    pub fn parse(text: &str, net: &Network) -> Result<Self, ModelError> {
        let doc: EvidenceDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
        Evidence::new(
            net,
            doc.findings.0.iter().map(|(k, v)| (k.as_str(), v.as_str())),
        )
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// Observed outcome of node `i`, if it is a finding.
    pub fn observed(&self, i: usize) -> Option<usize> {
        self.findings
            .binary_search_by_key(&i, |f| f.node)
            .ok()
            .map(|k| self.findings[k].outcome)
    }

    /// Findings as `id -> outcome` labels, in the order they were given.
    pub fn labels(&self) -> &IndexMap<String, String> {
        &self.labels
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            findings: &'a IndexMap<String, String>,
        }
        serde_json::to_string_pretty(&Out {
            findings: &self.labels,
        })
        .expect("evidence serialization cannot fail")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvidenceDoc {
    findings: OrderedPairs,
}

struct OrderedPairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for OrderedPairs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PairsVisitor;
        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = OrderedPairs;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from node id to outcome label")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some(entry) = map.next_entry::<String, String>()? {
                    pairs.push(entry);
                }
                Ok(OrderedPairs(pairs))
            }
        }
        d.deserialize_map(PairsVisitor)
    }
}

/// One outcome index per node, indexed by node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAssignment(pub Vec<usize>);

impl JointAssignment {
    pub fn outcome(&self, node: usize) -> usize {
        self.0[node]
    }

    pub fn labels<'n>(&self, net: &'n Network) -> IndexMap<&'n str, &'n str> {
        net.nodes()
            .iter()
            .zip(&self.0)
            .map(|(n, &o)| (n.id.as_str(), n.outcomes[o].as_str()))
            .collect()
    }
}

/// True iff `sample` agrees with every finding.
pub fn is_successful(sample: &JointAssignment, ev: &Evidence) -> bool {
    ev.findings().iter().all(|f| sample.0[f.node] == f.outcome)
}

/// Lower bound on P(findings): the product over finding nodes of the
/// smallest CPT entry for the observed outcome across parent configurations.
pub fn evidence_prob_lower(net: &Network, ev: &Evidence) -> f64 {
    evidence_prob_extreme(net, ev, f64::min, f64::INFINITY)
}

/// Upper bound on P(findings), as [`evidence_prob_lower`] with max.
pub fn evidence_prob_upper(net: &Network, ev: &Evidence) -> f64 {
    evidence_prob_extreme(net, ev, f64::max, f64::NEG_INFINITY)
}

fn evidence_prob_extreme(
    net: &Network,
    ev: &Evidence,
    pick: fn(f64, f64) -> f64,
    init: f64,
) -> f64 {
    ev.findings()
        .iter()
        .map(|f| {
            net.node(f.node)
                .cpt
                .iter()
                .map(|row| row[f.outcome])
                .fold(init, pick)
        })
        .product()
}
