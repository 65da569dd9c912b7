//! LAD over node potentials, solved as a bounded min-cost circulation.
//!
//! For arcs `a -> b` with observations `r`, minimising
//! `sum |r_k - (p_b - p_a)|` over potentials `p` is the dual of maximising
//! `sum r_k f_k` over circulations with `-1 <= f_k <= 1`. A primal network
//! simplex on the circulation (big-M artificial arcs to an extra root,
//! most-violated pricing, strongly feasible trees) returns optimal potentials.
//!
//! Flows stay integral throughout, so ratio-test ties are detected exactly.

use super::LpStatus;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphLadSolution {
    /// One potential per node; the lowest-indexed node of each connected
    /// component sits at zero.
    pub potentials: Vec<f64>,
    /// Component label per node (labels ordered by lowest member).
    pub components: Vec<usize>,
    pub objective: f64,
    pub status: LpStatus,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ArcState {
    Basic,
    Lower,
    Upper,
}

struct Network {
    tail: Vec<usize>,
    head: Vec<usize>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<ArcState>,
    root: usize,
    // spanning tree over basic arcs, rooted at `root`
    tree_adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    // potentials split as base[group[v]] + rel[v]; `group` is the subtree
    // hanging off one artificial arc, so `rel` differences stay small
    group: Vec<usize>,
    base: Vec<f64>,
    rel: Vec<f64>,
    queue: Vec<usize>,
    // block pricing cursor
    next_arc: usize,
}

impl Network {
    fn new(num_nodes: usize, arcs: usize) -> Self {
        let cap = arcs + num_nodes;
        Network {
            tail: Vec::with_capacity(cap),
            head: Vec::with_capacity(cap),
            cost: vec![0.0; cap],
            lower: Vec::with_capacity(cap),
            upper: Vec::with_capacity(cap),
            flow: Vec::with_capacity(cap),
            state: Vec::with_capacity(cap),
            root: num_nodes,
            tree_adj: vec![Vec::new(); num_nodes + 1],
            parent: vec![usize::MAX; num_nodes + 1],
            parent_arc: vec![usize::MAX; num_nodes + 1],
            depth: vec![0; num_nodes + 1],
            group: vec![usize::MAX; num_nodes + 1],
            base: Vec::new(),
            rel: vec![0.0; num_nodes + 1],
            queue: Vec::with_capacity(num_nodes + 1),
            next_arc: 0,
        }
    }

    fn push_arc(&mut self, t: usize, h: usize, lower: f64, upper: f64, flow: f64, state: ArcState) {
        let a = self.tail.len();
        self.tail.push(t);
        self.head.push(h);
        self.lower.push(lower);
        self.upper.push(upper);
        self.flow.push(flow);
        self.state.push(state);
        if state == ArcState::Basic {
            self.tree_adj[t].push(a);
            self.tree_adj[h].push(a);
        }
    }

    /// Recomputes parents, depths and potentials for the whole tree.
    fn rebuild_tree(&mut self) {
        self.base.clear();
        self.depth[self.root] = 0;
        self.rel[self.root] = 0.0;
        self.group[self.root] = usize::MAX;
        self.parent[self.root] = usize::MAX;
        self.parent_arc[self.root] = usize::MAX;
        self.relabel_from(self.root);
    }

    /// Hangs the subtree containing `w` below `z` through arc `a` and
    /// relabels it.
    fn hang(&mut self, w: usize, z: usize, a: usize) {
        self.parent[w] = z;
        self.parent_arc[w] = a;
        self.label(w, z, a);
        self.relabel_from(w);
    }

    fn label(&mut self, v: usize, u: usize, a: usize) {
        self.depth[v] = self.depth[u] + 1;
        // reduced cost c - pi_tail + pi_head = 0 on basic arcs
        let delta = if self.tail[a] == u {
            -self.cost[a]
        } else {
            self.cost[a]
        };
        if u == self.root {
            self.group[v] = self.base.len();
            self.base.push(delta);
            self.rel[v] = 0.0;
        } else {
            self.group[v] = self.group[u];
            self.rel[v] = self.rel[u] + delta;
        }
    }

    /// Breadth-first relabelling of everything below `start`, whose own
    /// parent fields are already correct.
    fn relabel_from(&mut self, start: usize) {
        let mut queue = std::mem::take(&mut self.queue);
        queue.clear();
        queue.push(start);
        let mut qi = 0;
        while qi < queue.len() {
            let u = queue[qi];
            qi += 1;
            for i in 0..self.tree_adj[u].len() {
                let a = self.tree_adj[u][i];
                if a == self.parent_arc[u] {
                    continue;
                }
                let v = if self.tail[a] == u {
                    self.head[a]
                } else {
                    self.tail[a]
                };
                self.parent[v] = u;
                self.parent_arc[v] = a;
                self.label(v, u, a);
                queue.push(v);
            }
        }
        self.queue = queue;
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        let (t, h) = (self.tail[a], self.head[a]);
        let diff = self.potential_diff(h, t);
        self.cost[a] + diff
    }

    /// `pi_h - pi_t`, exact in the base part when both share a group.
    fn potential_diff(&self, h: usize, t: usize) -> f64 {
        let part = |v: usize| -> (Option<usize>, f64) {
            if v == self.root {
                (None, 0.0)
            } else {
                (Some(self.group[v]), self.rel[v])
            }
        };
        let (gh, rh) = part(h);
        let (gt, rt) = part(t);
        if gh == gt {
            return rh - rt;
        }
        let bh = gh.map_or(0.0, |g| self.base[g]);
        let bt = gt.map_or(0.0, |g| self.base[g]);
        (bh - bt) + (rh - rt)
    }

    /// Block search pricing: scans arcs cyclically from the cursor in blocks
    /// and returns the most violated arc of the first block holding one.
    fn entering(&mut self, eps: f64) -> Option<(usize, f64)> {
        let m = self.tail.len();
        let block = ((m as f64).sqrt().ceil() as usize).max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut scanned = 0;
        let mut a = self.next_arc;
        while scanned < m {
            let (viol, dir) = match self.state[a] {
                ArcState::Basic => (0.0, 0.0),
                ArcState::Lower => (-self.reduced_cost(a), 1.0),
                ArcState::Upper => (self.reduced_cost(a), -1.0),
            };
            if viol > eps && best.is_none_or(|(_, _, v)| viol > v) {
                best = Some((a, dir, viol));
            }
            scanned += 1;
            a = if a + 1 == m { 0 } else { a + 1 };
            if scanned % block == 0 && best.is_some() {
                break;
            }
        }
        self.next_arc = a;
        best.map(|(a, dir, _)| (a, dir))
    }

    fn residual(&self, a: usize, forward: bool) -> f64 {
        if forward {
            self.upper[a] - self.flow[a]
        } else {
            self.flow[a] - self.lower[a]
        }
    }

    fn pivot(&mut self, e: usize, dir: f64) {
        let (s, t) = if dir > 0.0 {
            (self.tail[e], self.head[e])
        } else {
            (self.head[e], self.tail[e])
        };
        // cycle oriented along the flow change: apex down to s, then e
        // from s to t, then t up to the apex
        // entries are (arc, forward, on the t side of the apex)
        let mut up: Vec<(usize, bool, bool)> = Vec::new();
        let mut down: Vec<(usize, bool, bool)> = Vec::new();
        let (mut x, mut y) = (t, s);
        while x != y {
            if self.depth[x] >= self.depth[y] {
                let a = self.parent_arc[x];
                up.push((a, self.tail[a] == x, true));
                x = self.parent[x];
            } else {
                let a = self.parent_arc[y];
                // traversed parent -> child
                down.push((a, self.tail[a] == self.parent[y], false));
                y = self.parent[y];
            }
        }
        let mut cycle: Vec<(usize, bool, bool)> = down.into_iter().rev().collect();
        cycle.push((e, dir > 0.0, false));
        cycle.extend(up);

        // last blocking arc from the apex keeps the tree strongly feasible,
        // which rules out cycling whatever the entering rule
        let mut theta = f64::INFINITY;
        let mut leave = cycle.len();
        for (i, &(a, fwd, _)) in cycle.iter().enumerate() {
            let r = self.residual(a, fwd);
            if r <= theta {
                theta = r;
                leave = i;
            }
        }
        let (leaving, leaving_forward, t_side) = cycle[leave];
        if theta > 0.0 {
            for &(a, fwd, _) in &cycle {
                self.flow[a] += if fwd { theta } else { -theta };
            }
        }
        if leaving == e {
            self.state[e] = if dir > 0.0 {
                ArcState::Upper
            } else {
                ArcState::Lower
            };
            return;
        }
        self.state[leaving] = if leaving_forward {
            ArcState::Upper
        } else {
            ArcState::Lower
        };
        self.state[e] = ArcState::Basic;
        for v in [self.tail[leaving], self.head[leaving]] {
            self.tree_adj[v].retain(|&a| a != leaving);
        }
        self.tree_adj[s].push(e);
        self.tree_adj[t].push(e);
        // the subtree cut off by the leaving arc holds exactly one endpoint of e
        let (w, z) = if t_side { (t, s) } else { (s, t) };
        self.hang(w, z, e);
    }
}

/// Reusable solver for a fixed arc set. Each [`GraphLadSolver::solve`]
/// starts from the previous optimal basis, which stays primal feasible
/// because observations only enter the arc costs.
pub struct GraphLadSolver {
    net: Network,
    num_arcs: usize,
    arcs: Vec<(usize, usize)>,
    components: Vec<usize>,
}

impl GraphLadSolver {
    pub fn new(num_nodes: usize, arcs: &[(usize, usize)]) -> Self {
        let m = arcs.len();
        let root = num_nodes;
        let mut net = Network::new(num_nodes, m);
        // out-minus-in flow per node with every real arc at its lower bound -1
        let mut excess = vec![0.0f64; num_nodes];
        for &(a, b) in arcs {
            assert!(a < num_nodes && b < num_nodes, "arc endpoint out of range");
            net.push_arc(a, b, -1.0, 1.0, -1.0, ArcState::Lower);
            excess[a] -= 1.0;
            excess[b] += 1.0;
        }
        for (v, &ex) in excess.iter().enumerate() {
            // positive excess is fed from the root, negative drains into it
            let (t, h) = if ex > 0.0 { (root, v) } else { (v, root) };
            net.push_arc(t, h, 0.0, f64::INFINITY, ex.abs(), ArcState::Basic);
        }
        GraphLadSolver {
            net,
            num_arcs: m,
            arcs: arcs.to_vec(),
            components: component_labels(num_nodes, arcs),
        }
    }

    /// Solves for observations `r`, one per arc.
    pub fn solve(&mut self, r: &[f64], max_pivots: usize) -> GraphLadSolution {
        assert_eq!(self.num_arcs, r.len(), "one observation per arc");
        let m = self.num_arcs;
        let net = &mut self.net;
        let scale = r.iter().fold(0.0f64, |acc, v| acc + v.abs());
        let big_m = 1.0 + 2.0 * scale;
        let eps = 1e-11 * (1.0 + r.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        for (c, rk) in net.cost.iter_mut().zip(r) {
            *c = -rk;
        }
        net.cost[m..].iter_mut().for_each(|c| *c = big_m);
        net.rebuild_tree();

        let mut pivots = 0;
        let status = loop {
            let Some((e, dir)) = net.entering(eps) else {
                break LpStatus::Optimal;
            };
            if pivots == max_pivots {
                break LpStatus::IterationLimit;
            }
            pivots += 1;
            net.pivot(e, dir);
        };
        let status = if status == LpStatus::Optimal && net.flow[m..].iter().any(|&f| f != 0.0) {
            LpStatus::Infeasible
        } else {
            status
        };

        let num_nodes = net.root;
        let mut potentials = vec![0.0; num_nodes];
        let mut anchor: Vec<Option<usize>> = vec![None; num_nodes];
        for v in 0..num_nodes {
            let c = self.components[v];
            let a = *anchor[c].get_or_insert(v);
            potentials[v] = net.potential_diff(v, a);
        }
        let objective = self
            .arcs
            .iter()
            .zip(r)
            .map(|(&(a, b), rk)| (rk - (potentials[b] - potentials[a])).abs())
            .sum();
        GraphLadSolution {
            potentials,
            components: self.components.clone(),
            objective,
            status,
            pivots,
        }
    }
}

/// Solves `min_p sum_k |r_k - (p[to_k] - p[from_k])|` for arcs
/// `(from_k, to_k)` over `num_nodes` nodes, from a cold start.
pub fn solve_graph_lad(
    num_nodes: usize,
    arcs: &[(usize, usize)],
    r: &[f64],
    max_pivots: usize,
) -> GraphLadSolution {
    GraphLadSolver::new(num_nodes, arcs).solve(r, max_pivots)
}

fn component_labels(n: usize, arcs: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in arcs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for v in 0..n {
        let root = find(&mut parent, v);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        out[v] = label[root];
    }
    out
}
