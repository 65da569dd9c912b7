use std::collections::{BTreeMap, VecDeque};

use super::{NodeId, ObservationEdge, TreeEdge};
use crate::error::{Error, Result};

/// Sparse signed `K x L` incidence of observations onto tree paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathMatrix {
    cols: usize,
    rows: Vec<Vec<(usize, i8)>>,
}

impl PathMatrix {
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, i8)>>) -> Self {
        PathMatrix { cols, rows }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    /// Nonzeros of row `k`, sorted by column.
    pub fn row(&self, k: usize) -> &[(usize, i8)] {
        &self.rows[k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, i8)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.cols];
                for &(l, s) in r {
                    d[l] = s as f64;
                }
                d
            })
            .collect()
    }

    /// `(W t)_k`.
    pub fn row_dot(&self, k: usize, t: &[f64]) -> f64 {
        self.rows[k].iter().map(|&(l, s)| s as f64 * t[l]).sum()
    }

    /// Restriction to the given rows and columns (re-indexed in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> PathMatrix {
        let mut remap = vec![usize::MAX; self.cols];
        for (j, &c) in cols.iter().enumerate() {
            remap[c] = j;
        }
        let rows = rows
            .iter()
            .map(|&k| {
                let mut r: Vec<(usize, i8)> = self.rows[k]
                    .iter()
                    .filter(|(l, _)| remap[*l] != usize::MAX)
                    .map(|&(l, s)| (remap[l], s))
                    .collect();
                r.sort_unstable();
                r
            })
            .collect();
        PathMatrix {
            cols: cols.len(),
            rows,
        }
    }
}

struct RootedTree {
    // parent edge index and parent node for every non-root node
    parent: BTreeMap<NodeId, (usize, NodeId)>,
    depth: BTreeMap<NodeId, usize>,
    component: BTreeMap<NodeId, usize>,
}

fn root_tree(tree: &[TreeEdge]) -> RootedTree {
    let mut adj: BTreeMap<NodeId, Vec<(usize, NodeId)>> = BTreeMap::new();
    for e in tree {
        adj.entry(e.from).or_default().push((e.index, e.to));
        adj.entry(e.to).or_default().push((e.index, e.from));
    }
    let mut parent = BTreeMap::new();
    let mut depth = BTreeMap::new();
    let mut component = BTreeMap::new();
    let nodes: Vec<NodeId> = adj.keys().copied().collect();
    let mut comp = 0;
    for start in nodes {
        if depth.contains_key(&start) {
            continue;
        }
        depth.insert(start, 0);
        component.insert(start, comp);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = depth[&u];
            for &(e, v) in &adj[&u] {
                if let std::collections::btree_map::Entry::Vacant(slot) = depth.entry(v) {
                    slot.insert(du + 1);
                    component.insert(v, comp);
                    parent.insert(v, (e, u));
                    queue.push_back(v);
                }
            }
        }
        comp += 1;
    }
    RootedTree {
        parent,
        depth,
        component,
    }
}

/// Signed tree path for every observation: `+1` where the path follows a
/// tree edge's direction, `-1` where it runs against it.
pub fn build_path_matrix(tree: &[TreeEdge], observations: &[ObservationEdge]) -> Result<PathMatrix> {
    let rooted = root_tree(tree);
    let mut rows = Vec::with_capacity(observations.len());
    for o in observations {
        if o.from == o.to {
            rows.push(Vec::new());
            continue;
        }
        let locate = |n: NodeId| -> Result<(usize, usize)> {
            match (rooted.depth.get(&n), rooted.component.get(&n)) {
                (Some(&d), Some(&c)) => Ok((d, c)),
                _ => Err(Error::Graph(format!(
                    "observation {} endpoint {n} is not in the spanning tree",
                    o.index
                ))),
            }
        };
        let (mut da, ca) = locate(o.from)?;
        let (mut db, cb) = locate(o.to)?;
        if ca != cb {
            return Err(Error::Graph(format!(
                "observation {} joins {} and {} which are in different trees",
                o.index, o.from, o.to
            )));
        }
        let (mut a, mut b) = (o.from, o.to);
        let mut row = Vec::new();
        // edges walked upward from `from` are traversed child -> parent
        let step = |node: NodeId, upward: bool, row: &mut Vec<(usize, i8)>| -> NodeId {
            let (e, p) = rooted.parent[&node];
            let along = tree[e].from == p && tree[e].to == node;
            let sign = if along != upward { 1 } else { -1 };
            row.push((e, sign));
            p
        };
        while da > db {
            a = step(a, true, &mut row);
            da -= 1;
        }
        while db > da {
            b = step(b, false, &mut row);
            db -= 1;
        }
        while a != b {
            a = step(a, true, &mut row);
            b = step(b, false, &mut row);
        }
        row.sort_unstable();
        rows.push(row);
    }
    Ok(PathMatrix {
        cols: tree.len(),
        rows,
    })
}
