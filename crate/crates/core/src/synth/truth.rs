use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_outliers, synth_deformation, OutlierFlag, SynthConfig};
use crate::error::{Error, Result};
use crate::fields::io::{read_svf, write_svf};
use crate::fields::{
    control_dims, downsample_block_mean, svf_exp, upsample_svf, DeformationField, Steps, SvfField,
};
use crate::graph::{NodeId, StackGraph, TreeEdgeKind};
use crate::rng::{Purpose, Stream};

/// Per-section ground truth: the control-grid spoke SVF, the full-resolution
/// deformation it integrates to, the drawn scale and the outlier flags.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub sigma: BTreeMap<NodeId, f64>,
    pub spokes: BTreeMap<NodeId, SvfField>,
    pub deformations: BTreeMap<NodeId, DeformationField>,
    pub outliers: Vec<OutlierFlag>,
}

impl GroundTruth {
    pub fn is_outlier(&self, node: NodeId) -> bool {
        self.outliers.iter().any(|f| f.node == node)
    }
}

/// Ground truth plus the chain latents between consecutive reference slices.
#[derive(Clone, Debug)]
pub struct SyntheticStack {
    pub nodes: Vec<NodeId>,
    pub truth: GroundTruth,
    /// Keyed by the lower level of each chain edge.
    pub chain: BTreeMap<i64, SvfField>,
}

impl SyntheticStack {
    /// Truth latent for every tree edge of `graph`, in tree order.
    pub fn latents_for(&self, graph: &StackGraph) -> Result<Vec<SvfField>> {
        graph
            .tree()
            .iter()
            .map(|e| {
                let hit = match e.kind {
                    TreeEdgeKind::Chain if e.to.level == e.from.level + 1 => self.chain.get(&e.from.level),
                    TreeEdgeKind::Chain => None,
                    TreeEdgeKind::Spoke => self.truth.spokes.get(&e.to),
                };
                hit.cloned()
                    .ok_or_else(|| Error::Graph(format!("no truth for tree edge {} -> {}", e.from, e.to)))
            })
            .collect()
    }
}

fn control_latent(field: &DeformationField, ch: usize, cw: usize) -> Result<SvfField> {
    let (h, w) = (field.height(), field.width());
    let full = SvfField::from_fn(h, w, 1.0, |r, c| field.displacement(r, c));
    downsample_block_mean(&full, ch, cw)
}

/// Draws a regular synthetic stack with levels `1..=levels` and contrasts
/// `0..=contrasts` on `height x width` images. Spoke truths are the block
/// mean of a B-spline draw on the control grid (reduction `factor`); chain
/// truths use the same generator with `sigma_range` scaled by `chain_scale`.
pub fn synthesize_stack(
    cfg: &SynthConfig,
    levels: usize,
    contrasts: usize,
    height: usize,
    width: usize,
    factor: usize,
    chain_scale: f64,
) -> Result<SyntheticStack> {
    cfg.validate()?;
    if levels == 0 {
        return Err(Error::Config("a stack needs at least one level".into()));
    }
    let (ch, cw) = (control_dims(height, factor), control_dims(width, factor));
    let nodes: Vec<NodeId> = (1..=levels as i64)
        .flat_map(|n| (0..=contrasts).map(move |c| NodeId::new(c, n)))
        .collect();
    let spokes: Vec<NodeId> = nodes.iter().copied().filter(|n| !n.is_reference()).collect();
    let drawn: Vec<(NodeId, f64, SvfField, DeformationField)> = spokes
        .par_iter()
        .map(|&n| {
            let mut rng = Stream::for_purpose(
                cfg.seed,
                Purpose::ControlValues,
                n.contrast as u64,
                n.level as u64,
            );
            let slice = synth_deformation(cfg, height, width, &mut rng)?;
            let latent = control_latent(&slice.field, ch, cw)?;
            let phi = svf_exp(&upsample_svf(&latent, height, width)?, Steps::Auto)?;
            Ok((n, slice.sigma, latent, phi))
        })
        .collect::<Result<_>>()?;
    let chain_cfg = SynthConfig {
        sigma_range: [cfg.sigma_range[0] * chain_scale, cfg.sigma_range[1] * chain_scale],
        ..cfg.clone()
    };
    let chain = (1..levels as i64)
        .into_par_iter()
        .map(|n| {
            let mut rng = Stream::for_purpose(cfg.seed, Purpose::ChainLatent, 0, n as u64);
            let slice = synth_deformation(&chain_cfg, height, width, &mut rng)?;
            Ok((n, control_latent(&slice.field, ch, cw)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut truth = GroundTruth {
        seed: cfg.seed,
        height,
        width,
        sigma: BTreeMap::new(),
        spokes: BTreeMap::new(),
        deformations: BTreeMap::new(),
        outliers: select_outliers(cfg, &nodes),
    };
    for (n, sigma, latent, phi) in drawn {
        truth.sigma.insert(n, sigma);
        truth.spokes.insert(n, latent);
        truth.deformations.insert(n, phi);
    }
    Ok(SyntheticStack { nodes, truth, chain })
}

/// Stores a deformation as its displacement planes in an `.svf` container
/// (spacing 1).
pub fn write_deformation(path: &Path, d: &DeformationField) -> Result<()> {
    let v = SvfField::from_fn(d.height(), d.width(), 1.0, |r, c| d.displacement(r, c));
    write_svf(path, &v)
}

pub fn read_deformation(path: &Path) -> Result<DeformationField> {
    let v = read_svf(path)?;
    Ok(DeformationField::from_displacement(
        v.height(),
        v.width(),
        |r, c| v.at(r, c),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub contrast: usize,
    pub level: i64,
    pub sigma: f64,
    pub outlier: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    pub deformation: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<PathBuf>,
}

/// JSON index of a written ground truth; paths are relative to the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<TruthEntry>,
}

fn stem(n: NodeId) -> String {
    format!("c{}_n{:04}", n.contrast, n.level)
}

impl GroundTruth {
    /// Writes `truth.json` plus one deformation and one latent file per
    /// section under `dir`. Returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let sub = dir.join("truth");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let mut entries = Vec::new();
        for (&n, phi) in &self.deformations {
            let def = PathBuf::from("truth").join(format!("{}.def.svf", stem(n)));
            write_deformation(&dir.join(&def), phi)?;
            let latent = match self.spokes.get(&n) {
                Some(v) => {
                    let p = PathBuf::from("truth").join(format!("{}.latent.svf", stem(n)));
                    write_svf(&dir.join(&p), v)?;
                    Some(p)
                }
                None => None,
            };
            let flag = self.outliers.iter().find(|f| f.node == n);
            entries.push(TruthEntry {
                contrast: n.contrast,
                level: n.level,
                sigma: self.sigma.get(&n).copied().unwrap_or(0.0),
                outlier: flag.is_some(),
                angle: flag.map(|f| f.angle),
                deformation: def,
                latent,
            });
        }
        let m = TruthManifest {
            seed: self.seed,
            height: self.height,
            width: self.width,
            entries,
        };
        let path = dir.join("truth.json");
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let m: TruthManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(manifest, e.to_string()))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut truth = GroundTruth {
            seed: m.seed,
            height: m.height,
            width: m.width,
            sigma: BTreeMap::new(),
            spokes: BTreeMap::new(),
            deformations: BTreeMap::new(),
            outliers: Vec::new(),
        };
        for e in m.entries {
            let n = NodeId::new(e.contrast, e.level);
            let phi = read_deformation(&base.join(&e.deformation))?;
            if phi.height() != m.height || phi.width() != m.width {
                return Err(Error::format(
                    &e.deformation,
                    format!(
                        "deformation is {}x{}, manifest says {}x{}",
                        phi.height(),
                        phi.width(),
                        m.height,
                        m.width
                    ),
                ));
            }
            truth.deformations.insert(n, phi);
            truth.sigma.insert(n, e.sigma);
            if let Some(p) = e.latent {
                truth.spokes.insert(n, read_svf(&base.join(p))?);
            }
            if e.outlier {
                truth.outliers.push(OutlierFlag {
                    node: n,
                    angle: e.angle.unwrap_or(0.0),
                });
            }
        }
        Ok(truth)
    }
}
