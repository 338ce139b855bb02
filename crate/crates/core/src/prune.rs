//! Reachability pruning: route a dataset once, drop every branch no example
//! takes, and splice single-child nodes out of the tree.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::tree::{node_row, ObliqueTree};

#[derive(Clone, Debug, PartialEq)]
pub enum PrunedNode {
    Split {
        /// Flat row of the source node in the complete tree.
        source_row: usize,
        weight: Array1<f64>,
        bias: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Leaf index in the complete tree.
        source_leaf: usize,
        value: Array1<f64>,
    },
}

/// A tree with unreached branches removed. `nodes[0]` is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedTree {
    nodes: Vec<PrunedNode>,
    input_dim: usize,
}

impl PrunedTree {
    pub fn nodes(&self) -> &[PrunedNode] {
        &self.nodes
    }

    pub fn num_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, PrunedNode::Split { .. }))
            .count()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.len() - self.num_splits()
    }

    /// Source leaf index reached by `x`.
    pub fn leaf_index(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                PrunedNode::Split {
                    weight,
                    bias,
                    left,
                    right,
                    ..
                } => at = if weight.dot(&x) + bias >= 0.0 { *right } else { *left },
                PrunedNode::Leaf { source_leaf, .. } => return Ok(*source_leaf),
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ArrayView1<'_, f64>> {
        let leaf = self.leaf_index(x)?;
        let value = self
            .nodes
            .iter()
            .find_map(|n| match n {
                PrunedNode::Leaf { source_leaf, value } if *source_leaf == leaf => Some(value),
                _ => None,
            })
            .expect("reached leaf is kept");
        Ok(value.view())
    }
}

/// Visit counts gathered while routing the pruning dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneReport {
    /// Examples passing through each internal node, breadth-first.
    pub node_visits: Vec<usize>,
    pub leaf_visits: Vec<usize>,
    pub reachable_internal: usize,
    pub reachable_leaves: usize,
}

/// Visit counts of every internal node and leaf for the rows of `data`.
pub fn visit_counts(tree: &ObliqueTree, data: ArrayView2<'_, f64>) -> Result<PruneReport> {
    let h = tree.height();
    let mut node_visits = vec![0usize; (1 << h) - 1];
    let mut leaf_visits = vec![0usize; 1 << h];
    for x in data.rows() {
        if x.len() != tree.input_dim() {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                tree.input_dim(),
                x.len()
            )));
        }
        let (rows, leaf) = tree.path(x);
        for r in rows {
            node_visits[r] += 1;
        }
        leaf_visits[leaf] += 1;
    }
    Ok(PruneReport {
        reachable_internal: node_visits.iter().filter(|&&c| c > 0).count(),
        reachable_leaves: leaf_visits.iter().filter(|&&c| c > 0).count(),
        node_visits,
        leaf_visits,
    })
}

/// Prunes `tree` against the rows of `data` in a single routing pass.
pub fn prune_unreached(
    tree: &ObliqueTree,
    data: ArrayView2<'_, f64>,
) -> Result<(PrunedTree, PruneReport)> {
    if data.nrows() == 0 {
        return Err(Error::precondition("pruning needs at least one example"));
    }
    let report = visit_counts(tree, data)?;
    let mut nodes = Vec::new();
    build(tree, &report, 0, 0, &mut nodes);
    Ok((
        PrunedTree {
            nodes,
            input_dim: tree.input_dim(),
        },
        report,
    ))
}

fn child_count(report: &PruneReport, height: usize, depth: usize, j: usize) -> usize {
    if depth == height {
        report.leaf_visits[j]
    } else {
        report.node_visits[node_row(depth, j)]
    }
}

/// Emits the subtree rooted at `(depth, j)` and returns its position in `nodes`.
fn build(
    tree: &ObliqueTree,
    report: &PruneReport,
    depth: usize,
    j: usize,
    nodes: &mut Vec<PrunedNode>,
) -> usize {
    let h = tree.height();
    if depth == h {
        nodes.push(PrunedNode::Leaf {
            source_leaf: j,
            value: tree.leaves().row(j).to_owned(),
        });
        return nodes.len() - 1;
    }
    let left = child_count(report, h, depth + 1, 2 * j);
    let right = child_count(report, h, depth + 1, 2 * j + 1);
    match (left > 0, right > 0) {
        (true, false) => build(tree, report, depth + 1, 2 * j, nodes),
        (false, true) => build(tree, report, depth + 1, 2 * j + 1, nodes),
        _ => {
            let row = node_row(depth, j);
            let at = nodes.len();
            nodes.push(PrunedNode::Split {
                source_row: row,
                weight: tree.weights().row(row).to_owned(),
                bias: tree.biases()[row],
                left: 0,
                right: 0,
            });
            let l = build(tree, report, depth + 1, 2 * j, nodes);
            let r = build(tree, report, depth + 1, 2 * j + 1, nodes);
            if let PrunedNode::Split { left, right, .. } = &mut nodes[at] {
                *left = l;
                *right = r;
            }
            at
        }
    }
}
