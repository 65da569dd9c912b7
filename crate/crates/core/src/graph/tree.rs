use std::collections::BTreeSet;

use super::{NodeId, TreeEdge, TreeEdgeKind};
use crate::error::{Error, Result};

/// Canonical spanning tree: a chain through consecutive reference levels,
/// plus a spoke from each reference slice to every section at its level.
///
/// Chain edges come first (ascending level), then spokes sorted by
/// `(contrast, level)`.
pub fn build_spanning_tree(nodes: &[NodeId]) -> Result<Vec<TreeEdge>> {
    let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
    let reference: Vec<i64> = set.iter().filter(|n| n.is_reference()).map(|n| n.level).collect();
    let mut edges = Vec::with_capacity(set.len().saturating_sub(1));
    for w in reference.windows(2) {
        edges.push((NodeId::new(0, w[0]), NodeId::new(0, w[1]), TreeEdgeKind::Chain));
    }
    for n in set.iter().filter(|n| !n.is_reference()) {
        let anchor = NodeId::new(0, n.level);
        if !set.contains(&anchor) {
            return Err(Error::Graph(format!(
                "section {n} has no reference slice at its level"
            )));
        }
        edges.push((anchor, *n, TreeEdgeKind::Spoke));
    }
    Ok(edges
        .into_iter()
        .enumerate()
        .map(|(index, (from, to, kind))| TreeEdge {
            index,
            from,
            to,
            kind,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::regular;

    #[test]
    fn edge_counts() {
        assert_eq!(build_spanning_tree(&regular(3, 2)).unwrap().len(), 8);
        assert!(build_spanning_tree(&regular(1, 0)).unwrap().is_empty());
        let mut nodes = regular(3, 2);
        nodes.retain(|n| *n != NodeId::new(2, 2));
        assert_eq!(build_spanning_tree(&nodes).unwrap().len(), 7);
    }

    #[test]
    fn orientation() {
        let tree = build_spanning_tree(&regular(3, 2)).unwrap();
        for e in &tree {
            assert!(e.from.is_reference());
            match e.kind {
                TreeEdgeKind::Chain => {
                    assert!(e.to.is_reference());
                    assert_eq!(e.to.level, e.from.level + 1);
                }
                TreeEdgeKind::Spoke => {
                    assert_eq!(e.to.level, e.from.level);
                    assert!(e.to.contrast >= 1);
                }
            }
        }
    }

    #[test]
    fn orphan_section_is_an_error() {
        let nodes = vec![NodeId::new(0, 1), NodeId::new(1, 2)];
        assert!(matches!(build_spanning_tree(&nodes), Err(Error::Graph(_))));
    }
}
