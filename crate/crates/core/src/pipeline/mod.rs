//! End-to-end runs: load or generate a stack, infer per slab, integrate the
//! spoke latents, warp sections into the reference frame and write reports.

mod benchmark;
mod config;
mod evaluate;
pub mod plots;
mod stack;

pub use benchmark::{benchmark_tables, run_benchmark, BenchmarkOutcome, BenchmarkReport, BenchmarkRow};
pub use config::{BenchmarkConfig, Coupling, OutlierMode, PipelineConfig, SolverConfig, SyntheticConfig};
pub use evaluate::{integrate_pair, TruthMaps};
pub use plots::emit_plots;
pub use stack::{
    coupling_groups, slab_problems, solve_stack, FlaggedSite, SlabProblem, SlabReport, StackEstimate,
    StackInput,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::io::{
    gray_from_mask, gray_from_unit, mask_from_gray, read_pnm, read_svf, unit_from_gray, write_pgm, write_svf,
};
use crate::fields::{
    control_dims, downsample_block_mean, svf_exp, upsample_svf, warp_image, ImageSection, Interpolation,
    Steps, SvfField,
};
use crate::graph::manifest::GraphManifest;
use crate::graph::{NodeId, ObservationEdge, StackGraph};
use crate::inference::Model;
use crate::lp::{assemble_lad_lp, dump_lp};
use crate::metrics::{ErrorReport, GroupSummary};
use crate::rng::{Purpose, Stream};
use crate::synth::{
    phantom, rotate_section, section_from_reference, synthesize_observations, synthesize_stack, GroundTruth,
    SyntheticStack,
};

/// Share of LP-fallback sites above which a run counts as failed.
pub const FAILURE_THRESHOLD: f64 = 0.05;

/// Runs `f` on a pool of `threads` workers (0 for one per core).
pub fn with_parallelism<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// A stack with control-grid observations, ready for inference.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub nodes: Vec<NodeId>,
    pub images: BTreeMap<NodeId, ImageSection>,
    pub masks: BTreeMap<NodeId, Vec<u8>>,
    pub edges: Vec<ObservationEdge>,
    pub observations: Vec<SvfField>,
    pub height: usize,
    pub width: usize,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn input(&self) -> StackInput<'_> {
        StackInput {
            nodes: &self.nodes,
            edges: &self.edges,
            observations: &self.observations,
            masks: (!self.masks.is_empty()).then_some(&self.masks),
            height: self.height,
            width: self.width,
        }
    }

    pub fn control_dims(&self) -> (usize, usize) {
        self.observations
            .first()
            .map(|o| (o.height(), o.width()))
            .unwrap_or((0, 0))
    }
}

/// Reduces an observation to the control grid unless it is already there.
pub fn to_control_grid(v: &SvfField, ch: usize, cw: usize, path: &Path) -> Result<SvfField> {
    if (v.height(), v.width()) == (ch, cw) {
        return Ok(v.clone());
    }
    downsample_block_mean(v, ch, cw).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads the images, masks and registrations listed in the manifest.
pub fn load_dataset(manifest: &Path, p: u32, factor: usize) -> Result<Dataset> {
    let m = GraphManifest::load(manifest)?;
    let (edges, paths) = m.observations_for(p)?;
    let loaded = m
        .nodes
        .par_iter()
        .map(|n| {
            let g = read_pnm(&n.image)?;
            let mask = match &n.mask {
                Some(p) => {
                    let mg = read_pnm(p)?;
                    if (mg.height, mg.width) != (g.height, g.width) {
                        return Err(Error::format(p, "mask and image sizes differ"));
                    }
                    mask_from_gray(&mg)
                }
                None => vec![1; g.height * g.width],
            };
            ImageSection::new(n.contrast, n.level, g.height, g.width, unit_from_gray(&g), mask)
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = loaded.first() else {
        return Err(Error::Config("manifest lists no nodes".into()));
    };
    let (h, w) = (first.height(), first.width());
    if let Some((n, _)) = m
        .nodes
        .iter()
        .zip(&loaded)
        .find(|(_, i)| (i.height(), i.width()) != (h, w))
    {
        return Err(Error::format(
            &n.image,
            format!("image is not {h}x{w} like the first node"),
        ));
    }
    let (ch, cw) = (control_dims(h, factor), control_dims(w, factor));
    let observations = paths
        .par_iter()
        .map(|p| to_control_grid(&read_svf(p)?, ch, cw, p))
        .collect::<Result<Vec<_>>>()?;
    let mut images = BTreeMap::new();
    let mut masks = BTreeMap::new();
    for img in loaded {
        let id = NodeId::new(img.contrast, img.level);
        masks.insert(id, img.mask().to_vec());
        images.insert(id, img);
    }
    Ok(Dataset {
        nodes: m.node_ids(),
        images,
        masks,
        edges,
        observations,
        height: h,
        width: w,
        truth: None,
    })
}

/// Registrations corrupted for an outlier fraction: every edge touching a
/// flagged section, or `round(fraction * K)` edges of `edges` in row mode.
pub fn corrupted_edges(
    stack: &SyntheticStack,
    edges: &[ObservationEdge],
    mode: OutlierMode,
    fraction: f64,
    seed: u64,
) -> BTreeSet<(NodeId, NodeId)> {
    match mode {
        OutlierMode::Slices => {
            let flagged: BTreeSet<NodeId> = stack.truth.outliers.iter().map(|f| f.node).collect();
            edges
                .iter()
                .filter(|e| flagged.contains(&e.from) || flagged.contains(&e.to))
                .map(|e| (e.from, e.to))
                .collect()
        }
        OutlierMode::Rows => {
            let k = (fraction * edges.len() as f64).round() as usize;
            let mut rng = Stream::for_purpose(seed, Purpose::OutlierSelection, 0xffff, 0);
            rng.choose(edges.len(), k)
                .into_iter()
                .map(|i| (edges[i].from, edges[i].to))
                .collect()
        }
    }
}

/// Generates a stack with phantom images, noisy control-grid observations
/// and its ground truth.
pub fn synthetic_dataset(syn: &SyntheticConfig, p: u32, factor: usize, seed: u64) -> Result<Dataset> {
    let stack = synthesize_stack(
        &syn.synth_for(
            seed,
            if syn.outlier_mode == OutlierMode::Slices {
                syn.outlier_fraction
            } else {
                0.0
            },
        ),
        syn.levels,
        syn.contrasts,
        syn.height,
        syn.width,
        factor,
        syn.chain_scale,
    )?;
    let graph = StackGraph::new(&stack.nodes, p)?;
    let latents = stack.latents_for(&graph)?;
    let bad = corrupted_edges(
        &stack,
        graph.observations(),
        syn.outlier_mode,
        syn.outlier_fraction,
        seed,
    );
    let rows: BTreeSet<usize> = graph
        .observations()
        .iter()
        .filter(|e| bad.contains(&(e.from, e.to)))
        .map(|e| e.index)
        .collect();
    let observations = synthesize_observations(&graph, &latents, &syn.noise, &rows, seed)?;
    let (h, w) = (syn.height, syn.width);
    let images = stack
        .nodes
        .par_iter()
        .map(|&n| {
            let reference = phantom(seed, h, w, n.level)?;
            if n.is_reference() {
                return Ok((n, reference));
            }
            let mut img = section_from_reference(&reference, n.contrast, &stack.truth.spokes[&n])?;
            if let Some(f) = stack.truth.outliers.iter().find(|f| f.node == n) {
                img = rotate_section(&img, f.angle, Interpolation::Nearest)?;
            }
            Ok((n, img))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let masks = match syn.prune_by_mask {
        true => images.iter().map(|(n, i)| (*n, i.mask().to_vec())).collect(),
        false => BTreeMap::new(),
    };
    Ok(Dataset {
        nodes: stack.nodes.clone(),
        images,
        masks,
        edges: graph.observations().to_vec(),
        observations,
        height: h,
        width: w,
        truth: Some(stack.truth),
    })
}

/// Loads the manifest named by the config, or generates its synthetic stack.
pub fn dataset_for(cfg: &PipelineConfig) -> Result<Dataset> {
    match (&cfg.manifest, &cfg.synthetic) {
        (Some(m), _) => load_dataset(m, cfg.p, cfg.control_factor),
        (None, Some(s)) => synthetic_dataset(s, cfg.p, cfg.control_factor, cfg.seed),
        (None, None) => Err(Error::Config(
            "config needs either `manifest` or `synthetic`".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: Model,
    pub coupling: Coupling,
    pub p: u32,
    pub control_grid: [usize; 2],
    pub image: [usize; 2],
    pub nodes: usize,
    pub observations: usize,
    pub spokes: usize,
    pub slabs: Vec<SlabReport>,
    pub flagged_sites: Vec<FlaggedSite>,
    pub isolated_nodes: Vec<NodeId>,
    pub failure_fraction: f64,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<GroupSummary>>,
}

/// Wall time per phase, kept out of the report so the report is reproducible.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub phases: Vec<(String, f64)>,
}

impl Timing {
    fn lap(&mut self, name: &str, since: &mut Instant) {
        self.phases.push((name.into(), since.elapsed().as_secs_f64()));
        *since = Instant::now();
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub estimate: StackEstimate,
    pub dataset: Dataset,
    pub timing: Timing,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        self.report.failure_fraction > FAILURE_THRESHOLD
    }
}

fn stem(n: NodeId) -> String {
    format!("c{}_n{:04}", n.contrast, n.level)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn json_text<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Full reconstruction: infer, integrate, warp sections, write
/// `latents/`, `recon/`, `report.json`, `timing.json` and, with ground
/// truth, `metrics.csv` and `truth.json`.
pub fn run_reconstruction(cfg: &PipelineConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    with_parallelism(cfg.parallelism, || reconstruct_inner(cfg))?
}

fn reconstruct_inner(cfg: &PipelineConfig) -> Result<RunOutcome> {
    let mut timing = Timing::default();
    let mut clock = Instant::now();
    let ds = dataset_for(cfg)?;
    timing.lap("load", &mut clock);
    let est = solve_stack(&ds.input(), cfg.model, cfg.coupling, &cfg.solver.options())?;
    timing.lap("inference", &mut clock);

    let out = &cfg.output;
    create_dir(&out.join("latents"))?;
    for (n, v) in &est.spokes {
        write_svf(&out.join("latents").join(format!("{}.svf", stem(*n))), v)?;
    }
    for ((a, b), v) in &est.chain {
        write_svf(
            &out.join("latents")
                .join(format!("chain_n{:04}_n{:04}.svf", a.level, b.level)),
            v,
        )?;
    }
    let (h, w) = (ds.height, ds.width);
    let recon = est
        .spokes
        .par_iter()
        .filter_map(|(n, v)| ds.images.get(n).map(|img| (n, v, img)))
        .map(|(n, v, img)| {
            let phi = svf_exp(&upsample_svf(v, h, w)?, Steps::Auto)?;
            Ok((*n, warp_image(img, &phi, Interpolation::Bilinear, 0.0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for (n, img) in &recon {
        let dir = out.join("recon").join(format!("c{}", n.contrast));
        create_dir(&dir)?;
        write_pgm(
            &dir.join(format!("n{:04}.pgm", n.level)),
            &gray_from_unit(h, w, img.pixels()),
        )?;
    }
    timing.lap("integrate_warp", &mut clock);

    let mut notes = Vec::new();
    if est.spokes.is_empty() {
        notes.push("no histology sections: the spoke set is empty".to_string());
    }
    if !est.isolated.is_empty() {
        notes.push(format!(
            "{} nodes have no registrations and were not solved",
            est.isolated.len()
        ));
    }
    let mut metrics = None;
    if let Some(truth) = &ds.truth {
        truth.write(out)?;
        if !truth.deformations.is_empty() {
            let report = TruthMaps::new(truth, Some(&ds.masks))?.evaluate(&est.spokes)?;
            write_text(&out.join("metrics.csv"), &report.to_csv())?;
            metrics = Some(report.groups);
        }
        timing.lap("metrics", &mut clock);
    }
    let (ch, cw) = ds.control_dims();
    let report = RunReport {
        model: cfg.model,
        coupling: cfg.coupling,
        p: cfg.p,
        control_grid: [ch, cw],
        image: [h, w],
        nodes: ds.nodes.len(),
        observations: ds.edges.len(),
        spokes: est.spokes.len(),
        slabs: est.slabs.clone(),
        flagged_sites: est.flagged.clone(),
        isolated_nodes: est.isolated.clone(),
        failure_fraction: est.failure_fraction(),
        notes,
        metrics,
    };
    write_text(&out.join("report.json"), &json_text(&report)?)?;
    timing.lap("write", &mut clock);
    write_text(&out.join("timing.json"), &json_text(&timing)?)?;
    Ok(RunOutcome {
        report,
        estimate: est,
        dataset: ds,
        timing,
    })
}

/// Text dump of the LAD programs at control site `(row, col)` for both axes
/// and every slab.
pub fn lp_dump(cfg: &PipelineConfig, row: usize, col: usize) -> Result<String> {
    let ds = dataset_for(cfg)?;
    let (ch, cw) = ds.control_dims();
    if row >= ch || col >= cw {
        return Err(Error::Config(format!(
            "location {row},{col} is outside the {ch}x{cw} control grid"
        )));
    }
    let (problems, _) = slab_problems(&ds.input(), cfg.coupling)?;
    let site = row * cw + col;
    let mut text = String::new();
    for sp in &problems {
        let active: Vec<usize> = sp.subgraphs.sites()[site].iter().collect();
        let cols: Vec<usize> = (0..sp.graph.tree().len()).collect();
        for axis in 0..2 {
            text.push_str(&format!(
                "# group {} slab {} site {row},{col} axis {}\n",
                sp.group,
                sp.slab,
                ["x", "y"][axis]
            ));
            if active.is_empty() {
                text.push_str("# no active registrations\n");
                continue;
            }
            let w = sp.graph.path().restrict(&active, &cols);
            let r: Vec<f64> = active.iter().map(|&k| sp.fields[k].plane(axis)[site]).collect();
            text.push_str(&dump_lp(&assemble_lad_lp(&w, &r)?));
        }
    }
    Ok(text)
}

/// Scores the spoke latents under `est` (`latents/` of a reconstruction
/// or the directory itself) against a truth manifest.
pub fn metrics_from_dir(truth_manifest: &Path, est: &Path) -> Result<ErrorReport> {
    let truth = GroundTruth::load(truth_manifest)?;
    let dir = match est.join("latents").is_dir() {
        true => est.join("latents"),
        false => est.to_path_buf(),
    };
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "estimate directory {} does not exist",
            dir.display()
        )));
    }
    let mut spokes = BTreeMap::new();
    for &n in truth.deformations.keys() {
        let p = dir.join(format!("{}.svf", stem(n)));
        if p.exists() {
            spokes.insert(n, read_svf(&p)?);
        }
    }
    TruthMaps::new(&truth, None)?.evaluate(&spokes)
}

/// Writes images, masks and control-grid registrations of `ds` under `dir`
/// with a manifest that `load_dataset` reads back. Returns the manifest path.
pub fn write_dataset(ds: &Dataset, p: u32, dir: &Path) -> Result<std::path::PathBuf> {
    use crate::graph::manifest::{NodeEntry, ObservationEntry};
    for sub in ["img", "mask", "obs"] {
        create_dir(&dir.join(sub))?;
    }
    let mut nodes = Vec::new();
    for (&n, img) in &ds.images {
        let image = Path::new("img").join(format!("{}.pgm", stem(n)));
        write_pgm(
            &dir.join(&image),
            &gray_from_unit(ds.height, ds.width, img.pixels()),
        )?;
        let mask = Path::new("mask").join(format!("{}.pgm", stem(n)));
        write_pgm(&dir.join(&mask), &gray_from_mask(ds.height, ds.width, img.mask()))?;
        nodes.push(NodeEntry {
            contrast: n.contrast,
            level: n.level,
            image,
            mask: Some(mask),
        });
    }
    let mut observations = Vec::new();
    for (e, v) in ds.edges.iter().zip(&ds.observations) {
        let svf = Path::new("obs").join(format!("k{:05}.svf", e.index));
        write_svf(&dir.join(&svf), v)?;
        observations.push(ObservationEntry {
            from: e.from,
            to: e.to,
            svf,
        });
    }
    let path = dir.join("manifest.json");
    GraphManifest {
        p,
        nodes,
        observations,
    }
    .save(&path)?;
    Ok(path)
}
