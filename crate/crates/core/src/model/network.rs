use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Maximum absolute deviation of a CPT row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

const FORMAT_VERSION: u32 = 1;

/// A discrete variable with its conditional-probability table.
///
/// `cpt` has one row per joint parent configuration, enumerated in
/// mixed-radix order with the first-listed parent most significant, and one
/// column per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub outcomes: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

impl Node {
    pub fn new(
        id: impl Into<String>,
        outcomes: &[&str],
        parents: &[&str],
        cpt: Vec<Vec<f64>>,
    ) -> Self {
        Node {
            id: id.into(),
            outcomes: outcomes.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == label)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Rescale every CPT row to sum to exactly 1 instead of rejecting rows
    /// outside [`ROW_SUM_TOLERANCE`].
    pub renormalize: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    version: u32,
    nodes: Vec<Node>,
}

/// A validated, acyclic belief network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Network {
    pub fn new(nodes: Vec<Node>) -> Result<Self, ModelError> {
        Self::with_options(nodes, ParseOptions::default())
    }

    pub fn with_options(mut nodes: Vec<Node>, opts: ParseOptions) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateNode(node.id.clone()));
            }
        }

        let mut parents = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let mut seen = HashSet::new();
            let mut resolved = Vec::with_capacity(node.parents.len());
            for parent in &node.parents {
                let &p = index
                    .get(parent)
                    .ok_or_else(|| ModelError::DanglingParent {
                        node: node.id.clone(),
                        parent: parent.clone(),
                    })?;
                if !seen.insert(p) {
                    return Err(invalid(node, format!("parent `{parent}` listed twice")));
                }
                resolved.push(p);
            }
            parents.push(resolved);
        }

        let cards: Vec<usize> = nodes.iter().map(Node::cardinality).collect();
        let mut strides = Vec::with_capacity(nodes.len());
        for (node, ps) in nodes.iter_mut().zip(&parents) {
            validate_outcomes(node)?;
            let mut s = vec![0; ps.len()];
            let mut rows = 1usize;
            for (j, &p) in ps.iter().enumerate().rev() {
                s[j] = rows;
                rows = rows
                    .checked_mul(cards[p])
                    .ok_or_else(|| invalid(node, "parent configuration count overflows".into()))?;
            }
            validate_cpt(node, rows, opts)?;
            strides.push(s);
        }

        let order = topo_sort(&parents).map_err(|cycle| {
            ModelError::Cycle(cycle.into_iter().map(|i| nodes[i].id.clone()).collect())
        })?;

        Ok(Network {
            nodes,
            index,
            parents,
            strides,
            order,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent_indices(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Node indices with every node after all of its parents; ties are
    /// broken by declaration order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn topological_order(&self) -> Vec<&str> {
        self.order
            .iter()
            .map(|&i| self.nodes[i].id.as_str())
            .collect()
    }

    /// CPT row of node `i` selected by the parent outcomes in `assignment`
    /// (indexed by node).
    pub fn cpt_row(&self, i: usize, assignment: &[usize]) -> &[f64] {
        let row: usize = self.parents[i]
            .iter()
            .zip(&self.strides[i])
            .map(|(&p, &s)| assignment[p] * s)
            .sum();
        &self.nodes[i].cpt[row]
    }

    /// Total number of joint states, saturating at `u128::MAX`.
    pub fn joint_state_count(&self) -> u128 {
        self.nodes
            .iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n.cardinality() as u128))
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            version: FORMAT_VERSION,
            nodes: self.nodes.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("network serialization cannot fail")
    }
}

pub fn parse_network(text: &str) -> Result<Network, ModelError> {
    parse_network_with(text, ParseOptions::default())
}

pub fn parse_network_with(text: &str, opts: ParseOptions) -> Result<Network, ModelError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    if doc.version != FORMAT_VERSION {
        return Err(ModelError::Syntax(format!(
            "unsupported network format version {} (expected {FORMAT_VERSION})",
            doc.version
        )));
    }
    Network::with_options(doc.nodes, opts)
}

fn invalid(node: &Node, reason: String) -> ModelError {
    ModelError::Invalid {
        node: node.id.clone(),
        reason,
    }
}

fn validate_outcomes(node: &Node) -> Result<(), ModelError> {
    if node.outcomes.len() < 2 {
        return Err(invalid(node, "needs at least two outcomes".into()));
    }
    let mut seen = HashSet::new();
    for o in &node.outcomes {
        if !seen.insert(o.as_str()) {
            return Err(invalid(node, format!("outcome `{o}` listed twice")));
        }
    }
    Ok(())
}

fn validate_cpt(node: &mut Node, rows: usize, opts: ParseOptions) -> Result<(), ModelError> {
    if node.cpt.len() != rows {
        return Err(invalid(
            node,
            format!("cpt has {} rows, expected {rows}", node.cpt.len()),
        ));
    }
    let card = node.cardinality();
    for r in 0..rows {
        let row = &node.cpt[r];
        if row.len() != card {
            return Err(invalid(
                node,
                format!("cpt row {r} has {} entries, expected {card}", row.len()),
            ));
        }
        if let Some(&x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(invalid(
                node,
                format!("cpt row {r}: entry {x} outside [0, 1]"),
            ));
        }
        let sum: f64 = row.iter().sum();
        if opts.renormalize {
            if sum <= 0.0 {
                return Err(invalid(node, format!("cpt row {r}: row sum {sum}")));
            }
            if sum != 1.0 {
                node.cpt[r].iter_mut().for_each(|x| *x /= sum);
            }
        } else if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(invalid(node, format!("cpt row {r}: row sum {sum}")));
        }
    }
    Ok(())
}

/// Kahn's algorithm, always emitting the earliest-declared ready node.
/// On failure returns the nodes of one cycle in edge direction.
fn topo_sort(parents: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every unplaced node has an unplaced parent, so walking parent links
    // from any of them must revisit a node.
    let placed: HashSet<usize> = order.into_iter().collect();
    let start = (0..n).find(|i| !placed.contains(i)).unwrap();
    let mut path = vec![start];
    let mut pos = HashMap::from([(start, 0usize)]);
    let mut cur = start;
    loop {
        let next = *parents[cur]
            .iter()
            .find(|p| !placed.contains(p))
            .expect("unplaced node has an unplaced parent");
        if let Some(&at) = pos.get(&next) {
            let mut cycle = path.split_off(at);
            cycle.reverse();
            return Err(cycle);
        }
        pos.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}
