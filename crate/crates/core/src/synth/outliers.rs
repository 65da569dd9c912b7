use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SynthConfig;
use crate::error::Result;
use crate::fields::{warp_image, DeformationField, ImageSection, Interpolation};
use crate::graph::NodeId;
use crate::rng::{Purpose, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierFlag {
    pub node: NodeId,
    /// Rotation angle, degrees.
    pub angle: f64,
}

fn cos_sin(deg: f64) -> (f64, f64) {
    let d = deg.rem_euclid(360.0);
    match d {
        0.0 => (1.0, 0.0),
        90.0 => (0.0, 1.0),
        180.0 => (-1.0, 0.0),
        270.0 => (0.0, -1.0),
        _ => {
            let r = d.to_radians();
            (r.cos(), r.sin())
        }
    }
}

/// Rotation by `angle` degrees about the image centre `((w-1)/2, (h-1)/2)`.
/// Multiples of 90 degrees use exact coefficients.
pub fn rotation_field(height: usize, width: usize, angle: f64) -> DeformationField {
    let (cos, sin) = cos_sin(angle);
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mut mapping = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = (c as f64 - cx, r as f64 - cy);
            mapping.push([cx + cos * x - sin * y, cy + sin * x + cos * y]);
        }
    }
    DeformationField::from_mapping(height, width, mapping).expect("finite mapping")
}

pub fn rotate_section(img: &ImageSection, angle: f64, interpolation: Interpolation) -> Result<ImageSection> {
    let d = rotation_field(img.height(), img.width(), angle);
    warp_image(img, &d, interpolation, 0.0)
}

/// Picks `round(fraction * N_c)` slices of every histology contrast `c`
/// (chosen independently per contrast) and an angle for each. Flags are
/// sorted by node.
pub fn select_outliers(cfg: &SynthConfig, nodes: &[NodeId]) -> Vec<OutlierFlag> {
    let mut by_contrast: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for n in nodes.iter().filter(|n| !n.is_reference()) {
        by_contrast.entry(n.contrast).or_default().push(n.level);
    }
    let mut flags = Vec::new();
    for (c, mut levels) in by_contrast {
        levels.sort_unstable();
        levels.dedup();
        let k = (cfg.outlier_fraction * levels.len() as f64).round() as usize;
        if k == 0 {
            continue;
        }
        let mut pick = Stream::for_purpose(cfg.seed, Purpose::OutlierSelection, c as u64, 0);
        for i in pick.choose(levels.len(), k) {
            let level = levels[i];
            let mut a = Stream::for_purpose(cfg.seed, Purpose::OutlierAngle, c as u64, level as u64);
            let angle = cfg.outlier_angles[a.below(cfg.outlier_angles.len() as u64) as usize];
            flags.push(OutlierFlag {
                node: NodeId::new(c, level),
                angle,
            });
        }
    }
    flags.sort_by_key(|f| f.node);
    flags
}

/// Rotates the selected outlier sections. Reference slices are never touched.
pub fn inject_outliers(
    stack: &BTreeMap<NodeId, ImageSection>,
    cfg: &SynthConfig,
    interpolation: Interpolation,
) -> Result<(BTreeMap<NodeId, ImageSection>, Vec<OutlierFlag>)> {
    let nodes: Vec<NodeId> = stack.keys().copied().collect();
    let flags = select_outliers(cfg, &nodes);
    let mut out = stack.clone();
    for f in &flags {
        let img = &stack[&f.node];
        out.insert(f.node, rotate_section(img, f.angle, interpolation)?);
    }
    Ok((out, flags))
}
