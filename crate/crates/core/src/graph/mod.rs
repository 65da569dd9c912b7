//! Stack graph: nodes, canonical spanning tree, observation edges and the
//! signed path matrix linking each observation to the tree.

mod components;
pub mod manifest;
mod path;
mod subgraph;
mod tree;

pub use components::{connected_components, Slab};
pub use path::{build_path_matrix, PathMatrix};
pub use subgraph::{build_subgraphs, RowSet, SubgraphMap};
pub use tree::build_spanning_tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A section (contrast >= 1) or reference slice (contrast 0) at a stack level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub contrast: usize,
    pub level: i64,
}

impl NodeId {
    pub fn new(contrast: usize, level: i64) -> Self {
        NodeId { contrast, level }
    }

    pub fn is_reference(&self) -> bool {
        self.contrast == 0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(c={}, n={})", self.contrast, self.level)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeEdgeKind {
    /// Reference slice to the next reference slice.
    Chain,
    /// Reference slice to a section at the same level.
    Spoke,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeEdge {
    pub index: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: TreeEdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObservationEdge {
    pub index: usize,
    pub from: NodeId,
    pub to: NodeId,
}

impl ObservationEdge {
    /// `c_k`: 1 for registrations across contrasts.
    pub fn inter(&self) -> bool {
        self.from.contrast != self.to.contrast
    }

    /// `d_{k,c}`: level separation for intramodality registrations of contrast `c`.
    pub fn separation(&self, contrast: usize) -> f64 {
        if !self.inter() && self.from.contrast == contrast {
            (self.to.level - self.from.level).unsigned_abs() as f64
        } else {
            0.0
        }
    }

    pub fn reversed(&self) -> ObservationEdge {
        ObservationEdge {
            index: self.index,
            from: self.to,
            to: self.from,
        }
    }
}

/// Canonical observation graph for `nodes` with neighbourhood radius `p`.
///
/// Intermodality edges `(c, n) -> (c', n)`, `c < c'`, sorted by `(n, c, c')`,
/// followed by intramodality edges `(c, n) -> (c, n')`, `0 < n' - n <= p`,
/// sorted by `(c, n, n')`.
pub fn build_observation_graph(nodes: &[NodeId], p: u32) -> Vec<ObservationEdge> {
    let mut by_level: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut by_contrast: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for n in nodes {
        by_level.entry(n.level).or_default().push(n.contrast);
        by_contrast.entry(n.contrast).or_default().push(n.level);
    }
    let mut pairs = Vec::new();
    for (&level, contrasts) in by_level.iter_mut() {
        contrasts.sort_unstable();
        contrasts.dedup();
        for (i, &c) in contrasts.iter().enumerate() {
            for &c2 in &contrasts[i + 1..] {
                pairs.push((NodeId::new(c, level), NodeId::new(c2, level)));
            }
        }
    }
    for (&c, levels) in by_contrast.iter_mut() {
        levels.sort_unstable();
        levels.dedup();
        for (i, &n) in levels.iter().enumerate() {
            for &n2 in &levels[i + 1..] {
                if n2 - n > p as i64 {
                    break;
                }
                pairs.push((NodeId::new(c, n), NodeId::new(c, n2)));
            }
        }
    }
    pairs
        .into_iter()
        .enumerate()
        .map(|(index, (from, to))| ObservationEdge { index, from, to })
        .collect()
}

/// Nodes, spanning tree, observations and path matrix for one stack.
#[derive(Clone, Debug)]
pub struct StackGraph {
    nodes: Vec<NodeId>,
    tree: Vec<TreeEdge>,
    observations: Vec<ObservationEdge>,
    path: PathMatrix,
}

impl StackGraph {
    /// Builds the canonical tree and the observation graph with radius `p`.
    pub fn new(nodes: &[NodeId], p: u32) -> Result<Self> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable_by_key(|n| (n.level, n.contrast));
        nodes.dedup();
        let tree = build_spanning_tree(&nodes)?;
        let observations = build_observation_graph(&nodes, p);
        Self::from_parts(nodes, tree, observations)
    }

    /// Uses a caller-supplied observation list (e.g. from a manifest).
    pub fn with_observations(nodes: &[NodeId], observations: Vec<ObservationEdge>) -> Result<Self> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable_by_key(|n| (n.level, n.contrast));
        nodes.dedup();
        let tree = build_spanning_tree(&nodes)?;
        Self::from_parts(nodes, tree, observations)
    }

    fn from_parts(
        nodes: Vec<NodeId>,
        tree: Vec<TreeEdge>,
        observations: Vec<ObservationEdge>,
    ) -> Result<Self> {
        for o in &observations {
            for end in [o.from, o.to] {
                if nodes
                    .binary_search_by_key(&(end.level, end.contrast), |n| (n.level, n.contrast))
                    .is_err()
                {
                    return Err(Error::Graph(format!(
                        "observation {} references unknown node {end}",
                        o.index
                    )));
                }
            }
        }
        let path = build_path_matrix(&tree, &observations)?;
        Ok(StackGraph {
            nodes,
            tree,
            observations,
            path,
        })
    }

    /// Nodes sorted by `(level, contrast)`.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn tree(&self) -> &[TreeEdge] {
        &self.tree
    }

    pub fn observations(&self) -> &[ObservationEdge] {
        &self.observations
    }

    pub fn path(&self) -> &PathMatrix {
        &self.path
    }

    pub fn num_contrasts(&self) -> usize {
        self.nodes.iter().map(|n| n.contrast).max().unwrap_or(0)
    }

    /// Connected components of the observation graph, each with its tree
    /// edges and observation rows.
    pub fn slabs(&self) -> Result<Vec<Slab>> {
        let comps = connected_components(&self.nodes, &self.observations);
        comps
            .into_iter()
            .map(|nodes| Slab::new(nodes, &self.tree, &self.observations))
            .collect()
    }
}
