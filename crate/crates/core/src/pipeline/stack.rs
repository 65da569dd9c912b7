use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Coupling;
use crate::error::{Error, Result};
use crate::fields::SvfField;
use crate::graph::{build_subgraphs, NodeId, ObservationEdge, StackGraph, SubgraphMap, TreeEdgeKind};
use crate::inference::{infer, InferenceOptions, InferenceProblem, LikelihoodParams, Model, SiteStatus};

/// Control-grid observations of one stack.
#[derive(Clone, Copy, Debug)]
pub struct StackInput<'a> {
    pub nodes: &'a [NodeId],
    pub edges: &'a [ObservationEdge],
    /// One control-grid field per edge.
    pub observations: &'a [SvfField],
    /// Full-resolution tissue masks (`height x width`) per node; `None`
    /// keeps every registration at every site.
    pub masks: Option<&'a BTreeMap<NodeId, Vec<u8>>>,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabReport {
    /// `joint`, or `c<k>` for a per-contrast group.
    pub group: String,
    pub first: NodeId,
    pub last: NodeId,
    pub nodes: usize,
    /// Observation rows `K` and tree edges `L`.
    pub k: usize,
    pub l: usize,
    pub sites: usize,
    pub solved: usize,
    pub rank_deficient: usize,
    pub skipped: usize,
    pub lp_fallback: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub params: LikelihoodParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSite {
    pub group: String,
    pub slab: usize,
    pub row: usize,
    pub col: usize,
    pub status: SiteStatus,
}

#[derive(Clone, Debug, Default)]
pub struct StackEstimate {
    pub spokes: BTreeMap<NodeId, SvfField>,
    /// Chain latents keyed by `(from, to)`; per-contrast coupling keeps the
    /// estimate of the first contrast group.
    pub chain: BTreeMap<(NodeId, NodeId), SvfField>,
    pub slabs: Vec<SlabReport>,
    pub flagged: Vec<FlaggedSite>,
    /// Nodes without any registration, left out of inference.
    pub isolated: Vec<NodeId>,
    pub sites: usize,
}

impl StackEstimate {
    pub fn count(&self, status: SiteStatus) -> usize {
        self.flagged.iter().filter(|f| f.status == status).count()
    }

    /// Share of solved sites (over all slabs) that needed the LP fallback.
    pub fn failure_fraction(&self) -> f64 {
        if self.sites == 0 {
            0.0
        } else {
            self.count(SiteStatus::LpFallback) as f64 / self.sites as f64
        }
    }
}

/// Node groups solved independently under `coupling`.
pub fn coupling_groups(nodes: &[NodeId], coupling: Coupling) -> Vec<(String, Vec<NodeId>)> {
    let contrasts: BTreeSet<usize> = nodes
        .iter()
        .filter(|n| !n.is_reference())
        .map(|n| n.contrast)
        .collect();
    match coupling {
        Coupling::PerContrast if !contrasts.is_empty() => contrasts
            .into_iter()
            .map(|c| {
                let g = nodes
                    .iter()
                    .copied()
                    .filter(|n| n.contrast == 0 || n.contrast == c)
                    .collect();
                (format!("c{c}"), g)
            })
            .collect(),
        _ => vec![("joint".into(), nodes.to_vec())],
    }
}

fn reindex(edges: &[ObservationEdge], keep: &[usize]) -> Vec<ObservationEdge> {
    keep.iter()
        .enumerate()
        .map(|(index, &k)| ObservationEdge { index, ..edges[k] })
        .collect()
}

/// One slab ready for inference.
pub struct SlabProblem {
    pub group: String,
    pub group_index: usize,
    pub slab: usize,
    pub graph: StackGraph,
    pub fields: Vec<SvfField>,
    pub subgraphs: SubgraphMap,
}

impl SlabProblem {
    pub fn problem(&self) -> Result<InferenceProblem<'_>> {
        InferenceProblem::new(&self.graph, &self.fields, &self.subgraphs)
    }
}

/// Splits the stack into coupling groups and slabs. Also returns the
/// nodes that no slab covers.
pub fn slab_problems(input: &StackInput, coupling: Coupling) -> Result<(Vec<SlabProblem>, Vec<NodeId>)> {
    if input.edges.len() != input.observations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observation fields for {} edges",
            input.observations.len(),
            input.edges.len()
        )));
    }
    let mut out = Vec::new();
    let mut isolated = BTreeSet::new();
    let mut covered = BTreeSet::new();
    for (gi, (group, nodes)) in coupling_groups(input.nodes, coupling).into_iter().enumerate() {
        let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
        let keep: Vec<usize> = (0..input.edges.len())
            .filter(|&k| set.contains(&input.edges[k].from) && set.contains(&input.edges[k].to))
            .collect();
        let graph = StackGraph::with_observations(&nodes, reindex(input.edges, &keep))?;
        for (si, slab) in graph.slabs()?.into_iter().enumerate() {
            if slab.observations.is_empty() {
                isolated.extend(slab.nodes.iter().copied());
                continue;
            }
            covered.extend(slab.nodes.iter().copied());
            let rows: Vec<usize> = slab.observations.iter().map(|&k| keep[k]).collect();
            let sub = StackGraph::with_observations(&slab.nodes, reindex(input.edges, &rows))?;
            let fields: Vec<SvfField> = rows.iter().map(|&k| input.observations[k].clone()).collect();
            let (ch, cw) = (fields[0].height(), fields[0].width());
            let subgraphs = match input.masks {
                Some(m) => build_subgraphs(m, input.height, input.width, (ch, cw), sub.observations())?,
                None => SubgraphMap::full(ch, cw, rows.len()),
            };
            for n in sub.nodes() {
                let active: Vec<usize> = sub
                    .observations()
                    .iter()
                    .filter(|o| o.from == *n || o.to == *n)
                    .map(|o| o.index)
                    .collect();
                if !subgraphs
                    .sites()
                    .iter()
                    .any(|s| active.iter().any(|&k| s.contains(k)))
                {
                    return Err(Error::Graph(format!(
                        "node {n} has no active registration at any control site"
                    )));
                }
            }
            out.push(SlabProblem {
                group: group.clone(),
                group_index: gi,
                slab: si,
                graph: sub,
                fields,
                subgraphs,
            });
        }
    }
    // a node isolated in one group may still be solved in another
    Ok((out, isolated.difference(&covered).copied().collect()))
}

/// Runs inference on every slab of the stack.
pub fn solve_stack(
    input: &StackInput,
    model: Model,
    coupling: Coupling,
    opts: &InferenceOptions,
) -> Result<StackEstimate> {
    let (problems, isolated) = slab_problems(input, coupling)?;
    let mut out = StackEstimate {
        isolated,
        ..Default::default()
    };
    for sp in &problems {
        let sol = infer(model, &sp.problem()?, opts)?;
        let cw = sp.subgraphs.width;
        for (site, &st) in sol.status.iter().enumerate() {
            if st != SiteStatus::Solved {
                out.flagged.push(FlaggedSite {
                    group: sp.group.clone(),
                    slab: sp.slab,
                    row: site / cw,
                    col: site % cw,
                    status: st,
                });
            }
        }
        out.sites += sol.status.len();
        for (e, t) in sp.graph.tree().iter().zip(&sol.latents) {
            match e.kind {
                TreeEdgeKind::Spoke => {
                    out.spokes.insert(e.to, t.clone());
                }
                TreeEdgeKind::Chain if sp.group_index == 0 => {
                    out.chain.insert((e.from, e.to), t.clone());
                }
                TreeEdgeKind::Chain => {}
            }
        }
        let nodes = sp.graph.nodes();
        out.slabs.push(SlabReport {
            group: sp.group.clone(),
            first: nodes[0],
            last: nodes[nodes.len() - 1],
            nodes: nodes.len(),
            k: sp.graph.observations().len(),
            l: sp.graph.tree().len(),
            sites: sol.status.len(),
            solved: sol.count(SiteStatus::Solved),
            rank_deficient: sol.count(SiteStatus::RankDeficient),
            skipped: sol.count(SiteStatus::Skipped),
            lp_fallback: sol.count(SiteStatus::LpFallback),
            outer_iterations: sol.outer_iterations,
            converged: sol.converged,
            cost: sol.cost,
            params: sol.params,
        });
    }
    Ok(out)
}
