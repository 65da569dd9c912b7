use std::collections::{BTreeMap, BTreeSet};

use super::{NodeId, ObservationEdge, TreeEdge};
use crate::error::{Error, Result};

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the observation graph. Components are sorted by
/// their lowest `(level, contrast)` node and list nodes in that order.
pub fn connected_components(nodes: &[NodeId], observations: &[ObservationEdge]) -> Vec<Vec<NodeId>> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable_by_key(|n| (n.level, n.contrast));
    sorted.dedup();
    let index: BTreeMap<NodeId, usize> = sorted.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    for o in observations {
        if let (Some(&a), Some(&b)) = (index.get(&o.from), index.get(&o.to)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (i, &n) in sorted.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(n);
    }
    // roots are the minimum index of each group, so BTreeMap order is the
    // order of each group's lowest node
    groups.into_values().collect()
}

/// One independently solvable connected component.
#[derive(Clone, Debug, PartialEq)]
pub struct Slab {
    pub nodes: Vec<NodeId>,
    /// Global indices of the tree edges inside the slab.
    pub tree_edges: Vec<usize>,
    /// Global indices of the observations inside the slab.
    pub observations: Vec<usize>,
}

impl Slab {
    pub fn new(nodes: Vec<NodeId>, tree: &[TreeEdge], observations: &[ObservationEdge]) -> Result<Self> {
        let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
        let tree_edges: Vec<usize> = tree
            .iter()
            .filter(|e| set.contains(&e.from) && set.contains(&e.to))
            .map(|e| e.index)
            .collect();
        let obs: Vec<usize> = observations
            .iter()
            .filter(|o| set.contains(&o.from) && set.contains(&o.to))
            .map(|o| o.index)
            .collect();
        if tree_edges.len() + 1 != nodes.len() {
            // find a node the restricted tree does not reach from the first node
            let mut reached = BTreeSet::from([nodes[0]]);
            let mut grew = true;
            while grew {
                grew = false;
                for &e in &tree_edges {
                    let (a, b) = (tree[e].from, tree[e].to);
                    if reached.contains(&a) != reached.contains(&b) {
                        reached.insert(a);
                        reached.insert(b);
                        grew = true;
                    }
                }
            }
            let lost = nodes.iter().find(|n| !reached.contains(n)).copied();
            return Err(Error::Graph(format!(
                "node {} is disconnected from the spanning tree inside its slab",
                lost.unwrap_or(nodes[0])
            )));
        }
        Ok(Slab {
            nodes,
            tree_edges,
            observations: obs,
        })
    }
}
