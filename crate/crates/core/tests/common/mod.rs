#![allow(dead_code)]

use std::path::PathBuf;

use lsras::model::{parse_network, Evidence, Network, Node};
use proptest::prelude::*;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn ab_network() -> Network {
    parse_network(&std::fs::read_to_string(data("ab.json")).unwrap()).unwrap()
}

pub fn ab_evidence(net: &Network) -> Evidence {
    Evidence::new(net, [("B", "t")]).unwrap()
}

/// Raw material for a random binary network: per node a parent mask over
/// earlier nodes, up to eight CPT entries, and an evidence code
/// (0 unobserved, 1 = t, 2 = f).
#[derive(Debug, Clone)]
pub struct NetSpec {
    pub masks: Vec<u32>,
    pub probs: Vec<Vec<f64>>,
    pub evidence: Vec<u8>,
}

fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![
        1 => Just(0.0),
        1 => Just(1.0),
        8 => 0.0..=1.0f64,
    ]
}

pub fn net_spec(max_nodes: usize) -> impl Strategy<Value = NetSpec> {
    (1..=max_nodes).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<u32>(), n),
            prop::collection::vec(prop::collection::vec(prob(), 8), n),
            prop::collection::vec(0u8..3, n),
        )
            .prop_map(|(masks, probs, evidence)| NetSpec {
                masks,
                probs,
                evidence,
            })
    })
}

impl NetSpec {
    /// Nodes get at most three parents; declaration order is reversed so
    /// the topological sort has work to do.
    pub fn network(&self) -> Network {
        let n = self.masks.len();
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let allowed = if i == 0 {
                0
            } else {
                self.masks[i] & ((1u32 << i) - 1)
            };
            let parents: Vec<String> = (0..i)
                .filter(|j| allowed >> j & 1 == 1)
                .take(3)
                .map(|j| format!("X{j}"))
                .collect();
            let rows = 1usize << parents.len();
            let cpt = (0..rows)
                .map(|r| {
                    let v = self.probs[i][r];
                    vec![v, 1.0 - v]
                })
                .collect();
            let refs: Vec<&str> = parents.iter().map(String::as_str).collect();
            nodes.push(Node::new(format!("X{i}"), &["t", "f"], &refs, cpt));
        }
        nodes.reverse();
        Network::new(nodes).unwrap()
    }

    pub fn evidence(&self, net: &Network) -> Evidence {
        let pairs: Vec<(String, &str)> = self
            .evidence
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (format!("X{i}"), if c == 1 { "t" } else { "f" }))
            .collect();
        Evidence::new(net, pairs.iter().map(|(k, v)| (k.as_str(), *v))).unwrap()
    }
}
