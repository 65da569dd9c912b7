use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    corrupted_edges, json_text, plots, solve_stack, with_parallelism, write_text, BenchmarkConfig, Coupling,
    PipelineConfig, StackInput, Timing, TruthMaps,
};
use crate::error::{Error, Result};
use crate::fields::{control_dims, SvfField};
use crate::graph::{build_observation_graph, NodeId, StackGraph};
use crate::inference::{Model, SiteStatus};
use crate::metrics::{ErrorReport, GroupSummary};
use crate::synth::{select_outliers, synthesize_observations, synthesize_stack};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// `raw`, or `<coupling>-<model>` such as `st3-l1`.
    pub method: String,
    pub model: Option<Model>,
    pub coupling: Option<Coupling>,
    pub p: Option<u32>,
    pub outlier_fraction: f64,
    pub groups: Vec<GroupSummary>,
    pub lp_fallback: usize,
    pub rank_deficient: usize,
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = v.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl BenchmarkRow {
    fn singles(&self) -> impl Iterator<Item = &GroupSummary> {
        self.groups.iter().filter(|g| !g.group.contains('-'))
    }

    fn pairs(&self) -> impl Iterator<Item = &GroupSummary> {
        self.groups.iter().filter(|g| g.group.contains('-'))
    }

    /// `E_W` averaged over histology contrasts.
    pub fn mean_intra(&self) -> Option<f64> {
        mean(self.singles().map(|g| g.e_w))
    }

    /// `E_B` averaged over histology contrasts.
    pub fn mean_inter(&self) -> Option<f64> {
        mean(self.singles().map(|g| g.e_b))
    }

    /// `E_W` averaged over contrast pairs.
    pub fn cross_intra(&self) -> Option<f64> {
        mean(self.pairs().map(|g| g.e_w))
    }

    pub fn cross_inter(&self) -> Option<f64> {
        mean(self.pairs().map(|g| g.e_b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub levels: usize,
    pub contrasts: usize,
    pub image: [usize; 2],
    pub control_grid: [usize; 2],
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn find(&self, method: &str, p: Option<u32>, fraction: f64) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.p == p && r.outlier_fraction == fraction)
    }
}

pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    /// Per-slice rows of every configuration.
    pub csv: String,
    pub timing: Timing,
}

pub const CSV_HEADER: &str =
    "method,model,coupling,p,outlier_fraction,group,level,pixels,e_w,e_b_next,excluded";

fn row(
    method: String,
    model: Option<Model>,
    coupling: Option<Coupling>,
    p: Option<u32>,
    fraction: f64,
    metrics: &ErrorReport,
    csv: &mut String,
) -> BenchmarkRow {
    let prefix = format!(
        "{method},{},{},{},{fraction},",
        model.map(|m| m.label()).unwrap_or(""),
        coupling.map(|c| c.label()).unwrap_or(""),
        p.map(|p| p.to_string()).unwrap_or_default()
    );
    csv.push_str(&metrics.csv_rows(&prefix));
    BenchmarkRow {
        method,
        model,
        coupling,
        p,
        outlier_fraction: fraction,
        groups: metrics.groups.clone(),
        lp_fallback: 0,
        rank_deficient: 0,
    }
}

/// Runs the sweep and returns the tables without writing anything.
pub fn benchmark_tables(cfg: &PipelineConfig) -> Result<BenchmarkOutcome> {
    let b = cfg.benchmark.clone().unwrap_or_default();
    let BenchmarkConfig {
        stack: syn,
        models,
        couplings,
        p_values,
        outlier_fractions,
    } = b;
    let seed = cfg.seed;
    let opts = cfg.solver.options();
    let mut timing = Timing::default();
    let mut clock = Instant::now();
    let base = synthesize_stack(
        &syn.synth_for(seed, 0.0),
        syn.levels,
        syn.contrasts,
        syn.height,
        syn.width,
        cfg.control_factor,
        syn.chain_scale,
    )?;
    let p_max = p_values.iter().copied().max().unwrap_or(0);
    let graph = StackGraph::new(&base.nodes, p_max)?;
    let latents = base.latents_for(&graph)?;
    let all: BTreeSet<usize> = (0..graph.observations().len()).collect();
    let clean = synthesize_observations(&graph, &latents, &syn.noise, &BTreeSet::new(), seed)?;
    let garbage = synthesize_observations(&graph, &latents, &syn.noise, &all, seed)?;
    let index: BTreeMap<(NodeId, NodeId), usize> = graph
        .observations()
        .iter()
        .map(|e| ((e.from, e.to), e.index))
        .collect();
    let base_maps = TruthMaps::new(&base.truth, None)?;
    timing.lap("synthesis", &mut clock);

    let mut rows = Vec::new();
    let mut csv = format!("{CSV_HEADER}\n");
    for &f in &outlier_fractions {
        let mut stack = base.clone();
        stack.truth.outliers = match syn.outlier_mode {
            super::OutlierMode::Slices => select_outliers(&syn.synth_for(seed, f), &base.nodes),
            super::OutlierMode::Rows => Vec::new(),
        };
        let bad = corrupted_edges(&stack, graph.observations(), syn.outlier_mode, f, seed);
        let field = |key: (NodeId, NodeId)| -> Result<SvfField> {
            let k = *index
                .get(&key)
                .ok_or_else(|| Error::Graph(format!("no registration {} -> {}", key.0, key.1)))?;
            Ok(if bad.contains(&key) {
                garbage[k].clone()
            } else {
                clean[k].clone()
            })
        };
        let maps = TruthMaps {
            excluded: stack.truth.outliers.iter().map(|o| o.node).collect(),
            ..base_maps.clone()
        };
        let raw: BTreeMap<NodeId, SvfField> = base
            .truth
            .spokes
            .keys()
            .map(|&n| Ok((n, field((NodeId::new(0, n.level), n))?)))
            .collect::<Result<_>>()?;
        rows.push(row(
            "raw".into(),
            None,
            None,
            None,
            f,
            &maps.evaluate(&raw)?,
            &mut csv,
        ));
        for &p in &p_values {
            let edges = build_observation_graph(&base.nodes, p);
            let obs = edges
                .iter()
                .map(|e| field((e.from, e.to)))
                .collect::<Result<Vec<_>>>()?;
            let input = StackInput {
                nodes: &base.nodes,
                edges: &edges,
                observations: &obs,
                masks: None,
                height: syn.height,
                width: syn.width,
            };
            for &coupling in &couplings {
                for &model in &models {
                    let est = solve_stack(&input, model, coupling, &opts)?;
                    let method = format!("{}-{}", coupling.label(), model.label());
                    let metrics = maps.evaluate(&est.spokes)?;
                    let mut r = row(
                        method,
                        Some(model),
                        Some(coupling),
                        Some(p),
                        f,
                        &metrics,
                        &mut csv,
                    );
                    r.lp_fallback = est.count(SiteStatus::LpFallback);
                    r.rank_deficient = est.count(SiteStatus::RankDeficient);
                    rows.push(r);
                }
            }
        }
        timing.lap(&format!("fraction {f}"), &mut clock);
    }
    let report = BenchmarkReport {
        seed,
        levels: syn.levels,
        contrasts: syn.contrasts,
        image: [syn.height, syn.width],
        control_grid: [
            control_dims(syn.height, cfg.control_factor),
            control_dims(syn.width, cfg.control_factor),
        ],
        rows,
    };
    Ok(BenchmarkOutcome { report, csv, timing })
}

/// Runs the sweep and writes `report.json`, `metrics.csv`, `timing.json`
/// and `plots/*.svg` under the output directory.
pub fn run_benchmark(cfg: &PipelineConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let outcome = with_parallelism(cfg.parallelism, || benchmark_tables(cfg))??;
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("report.json"), &json_text(&outcome.report)?)?;
    write_text(&out.join("metrics.csv"), &outcome.csv)?;
    plots::emit_plots(&outcome.report, &out.join("plots"))?;
    write_text(&out.join("timing.json"), &json_text(&outcome.timing)?)?;
    Ok(outcome)
}
