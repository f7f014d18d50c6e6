//! Discrete belief networks: file format, validation, evidence, and the
//! brute-force enumeration oracle.

mod evidence;
mod exact;
mod network;

use thiserror::Error;

pub use evidence::{
    evidence_prob_lower, evidence_prob_upper, is_successful, Evidence, Finding, JointAssignment,
};
pub(crate) use exact::labelled_distributions;
pub use exact::{exact_query, exact_query_capped, ExactReport, ExactResult, DEFAULT_STATE_CAP};
pub use network::{
    parse_network, parse_network_with, Network, Node, ParseOptions, ROW_SUM_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("node `{node}`: {reason}")]
    Invalid { node: String, reason: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` lists unknown parent `{parent}`")]
    DanglingParent { node: String, parent: String },
    #[error("cycle detected: {}", cycle_text(.0))]
    Cycle(Vec<String>),
    #[error("evidence references unknown node `{0}`")]
    UnknownNode(String),
    #[error("evidence for node `{node}` names unknown outcome `{outcome}`")]
    UnknownOutcome { node: String, outcome: String },
    #[error("node `{0}` appears more than once in the evidence")]
    DuplicateFinding(String),
    #[error("joint state space of {states} states exceeds the enumeration cap of {cap}")]
    StateCapExceeded { states: u128, cap: u64 },
}

fn cycle_text(ids: &[String]) -> String {
    let mut s = ids.join(" -> ");
    if let Some(first) = ids.first() {
        s.push_str(" -> ");
        s.push_str(first);
    }
    s
}
