//! MAP estimation of the latent spanning-tree SVFs on the control grid.
//!
//! Both likelihoods decouple over control sites and the two displacement
//! axes. Sites whose subgraph is empty are skipped and hold zeros.

mod gaussian;
mod laplacian;
pub mod variance;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fields::SvfField;
use crate::graph::{NodeId, StackGraph, SubgraphMap, TreeEdgeKind};
use crate::{Error, Result};

pub use gaussian::{gaussian_latents, infer_gaussian};
pub use laplacian::infer_laplacian;

/// Likelihood: `l2` (Gaussian) or `l1` (Laplacian) in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "l2", alias = "gaussian")]
    Gaussian,
    #[serde(rename = "l1", alias = "laplacian")]
    Laplacian,
}

impl Model {
    pub fn label(&self) -> &'static str {
        match self {
            Model::Gaussian => "l2",
            Model::Laplacian => "l1",
        }
    }
}

/// How intramodality variance rates are shared between contrasts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// One rate per contrast plus the intermodality variance.
    #[default]
    PerContrast,
    /// A single rate for all contrasts plus the intermodality variance.
    Shared,
}

/// Backend for the per-site LAD problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadBackend {
    /// Network simplex over node potentials.
    #[default]
    Network,
    /// Dense revised simplex over tree latents.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodParams {
    pub model: Model,
    pub sigma2_inter: f64,
    /// Intramodality variance rate per contrast `0..=C`.
    pub sigma2_contrast: Vec<f64>,
    /// Post-hoc Laplace scale.
    pub b: Option<f64>,
}

impl LikelihoodParams {
    /// Unit variances for node contrasts `0..num_contrasts`.
    pub fn unit(model: Model, num_contrasts: usize) -> Self {
        LikelihoodParams {
            model,
            sigma2_inter: 1.0,
            sigma2_contrast: vec![1.0; num_contrasts],
            b: None,
        }
    }

    /// Per-observation variances `c_k s_inter + sum_c d_kc s_c`.
    pub fn observation_variances(&self, graph: &StackGraph) -> Result<Vec<f64>> {
        graph
            .observations()
            .iter()
            .map(|o| {
                if o.inter() {
                    return Ok(self.sigma2_inter);
                }
                let c = o.from.contrast;
                let rate = self
                    .sigma2_contrast
                    .get(c)
                    .ok_or_else(|| Error::Validation(format!("no variance rate for contrast {c}")))?;
                Ok(o.separation(c) * rate)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteStatus {
    Solved,
    /// Active observation graph disconnected; solved with a fallback.
    RankDeficient,
    /// No active observations.
    Skipped,
    /// LP did not reach optimality; Gaussian unit-variance solution used.
    LpFallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    /// Relative cost change that stops coordinate descent.
    pub tol: f64,
    pub max_outer: usize,
    /// Keep variances fixed at these values (Gaussian only).
    pub fixed_params: Option<LikelihoodParams>,
    pub variance_model: VarianceModel,
    pub lad_backend: LadBackend,
    pub lp_tol: f64,
    /// Pivot cap per LAD program; `None` scales with the problem size.
    pub lp_max_iters: Option<usize>,
    /// Relative ridge added to rank-deficient normal equations.
    pub ridge: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            tol: 1e-6,
            max_outer: 100,
            fixed_params: None,
            variance_model: VarianceModel::PerContrast,
            lad_backend: LadBackend::Network,
            lp_tol: crate::lp::DEFAULT_TOL,
            lp_max_iters: None,
            ridge: 1e-8,
        }
    }
}

/// Graph, one control-grid observation field per observation edge, and the
/// active rows per site.
#[derive(Clone, Copy, Debug)]
pub struct InferenceProblem<'a> {
    pub graph: &'a StackGraph,
    pub observations: &'a [SvfField],
    pub subgraphs: &'a SubgraphMap,
}

impl<'a> InferenceProblem<'a> {
    pub fn new(
        graph: &'a StackGraph,
        observations: &'a [SvfField],
        subgraphs: &'a SubgraphMap,
    ) -> Result<Self> {
        let k = graph.observations().len();
        if observations.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} observation fields for {k} observation edges",
                observations.len()
            )));
        }
        let Some(first) = observations.first() else {
            return Err(Error::Validation("no observations to infer from".into()));
        };
        if let Some(bad) = observations.iter().position(|o| !o.same_grid(first)) {
            return Err(Error::DimensionMismatch(format!(
                "observation {bad} is not on the grid of observation 0"
            )));
        }
        if (subgraphs.height, subgraphs.width) != (first.height(), first.width()) {
            return Err(Error::DimensionMismatch(format!(
                "subgraph map {}x{} vs control grid {}x{}",
                subgraphs.height,
                subgraphs.width,
                first.height(),
                first.width()
            )));
        }
        if subgraphs.sites().iter().any(|s| s.capacity() != k) {
            return Err(Error::DimensionMismatch(
                "row sets sized for another graph".into(),
            ));
        }
        Ok(InferenceProblem {
            graph,
            observations,
            subgraphs,
        })
    }

    pub fn height(&self) -> usize {
        self.observations[0].height()
    }

    pub fn width(&self) -> usize {
        self.observations[0].width()
    }

    pub fn spacing(&self) -> f64 {
        self.observations[0].spacing()
    }

    pub fn num_sites(&self) -> usize {
        self.height() * self.width()
    }

    fn node_index(&self) -> BTreeMap<NodeId, usize> {
        self.graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (*n, i))
            .collect()
    }

    /// `(from, to)` node indices per observation edge.
    fn observation_arcs(&self) -> Vec<(usize, usize)> {
        let idx = self.node_index();
        self.graph
            .observations()
            .iter()
            .map(|o| (idx[&o.from], idx[&o.to]))
            .collect()
    }

    /// `(from, to)` node indices per tree edge.
    fn tree_arcs(&self) -> Vec<(usize, usize)> {
        let idx = self.node_index();
        self.graph
            .tree()
            .iter()
            .map(|e| (idx[&e.from], idx[&e.to]))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSolution {
    /// One field per tree edge, in tree-edge order.
    #[serde(skip)]
    pub latents: Vec<SvfField>,
    pub status: Vec<SiteStatus>,
    pub params: LikelihoodParams,
    pub cost: f64,
    /// Cost after the initial latent update and after every outer iteration.
    pub cost_history: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl LatentSolution {
    pub fn count(&self, status: SiteStatus) -> usize {
        self.status.iter().filter(|&&s| s == status).count()
    }
}

/// Dispatches to the inference routine of `model`.
pub fn infer(model: Model, problem: &InferenceProblem, opts: &InferenceOptions) -> Result<LatentSolution> {
    match model {
        Model::Gaussian => infer_gaussian(problem, opts),
        Model::Laplacian => infer_laplacian(problem, opts),
    }
}

/// Residual `R_k - (W T)_k` at `site` on `axis`.
fn residual(problem: &InferenceProblem, latents: &[SvfField], k: usize, site: usize, axis: usize) -> f64 {
    let fitted: f64 = problem
        .graph
        .path()
        .row(k)
        .iter()
        .map(|&(l, s)| f64::from(s) * latents[l].plane(axis)[site])
        .sum();
    problem.observations[k].plane(axis)[site] - fitted
}

/// Per observation: number of active sites and the sum of squared
/// residuals over those sites and both axes. Skipped sites contribute nothing.
fn residual_statistics(problem: &InferenceProblem, latents: &[SvfField]) -> (Vec<f64>, Vec<f64>) {
    let k = problem.graph.observations().len();
    let mut n = vec![0.0; k];
    let mut s = vec![0.0; k];
    for (site, rows) in problem.subgraphs.sites().iter().enumerate() {
        for row in rows.iter() {
            n[row] += 1.0;
            for axis in 0..2 {
                let r = residual(problem, latents, row, site, axis);
                s[row] += r * r;
            }
        }
    }
    (n, s)
}

/// Objective value of `model` at `latents`: the Gaussian negative
/// log-likelihood with variances from `params`, or the summed absolute
/// residuals for the Laplacian.
pub fn evaluate_cost(
    model: Model,
    problem: &InferenceProblem,
    latents: &[SvfField],
    params: &LikelihoodParams,
) -> Result<f64> {
    match model {
        Model::Gaussian => {
            let var = params.observation_variances(problem.graph)?;
            let (n, s) = residual_statistics(problem, latents);
            let two_pi = 2.0 * std::f64::consts::PI;
            Ok((0..var.len())
                .map(|k| n[k] * (two_pi * var[k]).ln() + s[k] / (2.0 * var[k]))
                .sum())
        }
        Model::Laplacian => {
            let mut total = 0.0;
            for (site, rows) in problem.subgraphs.sites().iter().enumerate() {
                for row in rows.iter() {
                    for axis in 0..2 {
                        total += residual(problem, latents, row, site, axis).abs();
                    }
                }
            }
            Ok(total)
        }
    }
}

/// Spoke latents keyed by their histology node, ordered by (contrast, level).
pub fn extract_reconstruction_transforms(
    graph: &StackGraph,
    sol: &LatentSolution,
) -> Vec<(NodeId, SvfField)> {
    let mut out: Vec<(NodeId, SvfField)> = graph
        .tree()
        .iter()
        .zip(&sol.latents)
        .filter(|(e, _)| e.kind == TreeEdgeKind::Spoke)
        .map(|(e, f)| (e.to, f.clone()))
        .collect();
    out.sort_by_key(|(n, _)| (n.contrast, n.level));
    out
}

/// Converts node potentials into tree latents `p(to) - p(from)`. Components
/// of the active graph other than the first one reached are shifted so the
/// tree edge through which a breadth-first walk enters them is zero.
fn latents_from_potentials(
    num_nodes: usize,
    tree: &[(usize, usize)],
    potentials: &[f64],
    components: &[usize],
) -> Vec<f64> {
    let mut offset: Vec<Option<f64>> = vec![None; num_nodes];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    for (l, &(a, b)) in tree.iter().enumerate() {
        adj[a].push(l);
        adj[b].push(l);
    }
    let mut seen = vec![false; num_nodes];
    let mut queue = Vec::with_capacity(num_nodes);
    for start in 0..num_nodes {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        offset[components[start]].get_or_insert(0.0);
        queue.clear();
        queue.push(start);
        let mut qi = 0;
        while qi < queue.len() {
            let u = queue[qi];
            qi += 1;
            let pu = potentials[u] + offset[components[u]].unwrap();
            for &l in &adj[u] {
                let (a, b) = tree[l];
                let v = if a == u { b } else { a };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                offset[components[v]].get_or_insert(pu - potentials[v]);
                queue.push(v);
            }
        }
    }
    tree.iter()
        .map(|&(a, b)| {
            (potentials[b] + offset[components[b]].unwrap())
                - (potentials[a] + offset[components[a]].unwrap())
        })
        .collect()
}

/// Number of connected components of `arcs` over `num_nodes` nodes.
fn count_components(num_nodes: usize, arcs: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..num_nodes).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = num_nodes;
    for (a, b) in arcs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            comps -= 1;
        }
    }
    comps
}

/// Assembles per-site latent vectors (one per axis) into tree-edge fields.
fn assemble_fields(problem: &InferenceProblem, per_site: &[[Vec<f64>; 2]]) -> Vec<SvfField> {
    let l = problem.graph.tree().len();
    let (h, w, spacing) = (problem.height(), problem.width(), problem.spacing());
    let mut out = vec![SvfField::zeros(h, w, spacing); l];
    for (site, axes) in per_site.iter().enumerate() {
        for (axis, t) in axes.iter().enumerate() {
            for (edge, &v) in t.iter().enumerate() {
                out[edge].plane_mut(axis)[site] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potentials_to_latents_anchor_components() {
        // chain 0-1-2-3 as the tree, components {0,1} and {2,3}
        let tree = [(0, 1), (1, 2), (2, 3)];
        let t = latents_from_potentials(4, &tree, &[0.0, 2.0, 0.0, 5.0], &[0, 0, 1, 1]);
        assert_eq!(t, vec![2.0, 0.0, 5.0]);
    }

    #[test]
    fn component_count() {
        assert_eq!(count_components(4, [(0, 1), (2, 3)].into_iter()), 2);
        assert_eq!(count_components(3, std::iter::empty()), 3);
    }
}
