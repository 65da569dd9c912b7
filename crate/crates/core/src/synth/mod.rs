//! Synthetic stacks for closed-loop validation: B-spline ground-truth
//! deformations, rotated outlier slices and noisy observation sets.

pub mod bspline;
mod outliers;
mod phantom;
mod truth;

pub use bspline::BSplineGrid;
pub use outliers::{inject_outliers, rotate_section, rotation_field, select_outliers, OutlierFlag};
pub use phantom::{phantom, section_from_reference};
pub use truth::{
    read_deformation, synthesize_stack, write_deformation, GroundTruth, SyntheticStack, TruthEntry,
    TruthManifest,
};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{DeformationField, SvfField};
use crate::graph::{ObservationEdge, StackGraph};
use crate::rng::{Purpose, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// B-spline lattice `[rows, cols]`; each node carries a 2-vector.
    pub control_grid: [usize; 2],
    /// Bounds of the uniform draw for the per-slice deformation scale, pixels.
    pub sigma_range: [f64; 2],
    pub outlier_fraction: f64,
    /// Rotation angles for outlier slices, degrees.
    pub outlier_angles: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            control_grid: [9, 9],
            sigma_range: [3.0, 7.0],
            outlier_fraction: 0.0,
            outlier_angles: vec![90.0, 180.0, 270.0],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.sigma_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!("bad sigma_range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier_fraction {} outside [0, 1]",
                self.outlier_fraction
            )));
        }
        if self.control_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("control_grid needs at least 2x2 nodes".into()));
        }
        if self.outlier_fraction > 0.0 && self.outlier_angles.is_empty() {
            return Err(Error::Config("outlier_angles is empty".into()));
        }
        Ok(())
    }
}

/// One drawn ground-truth slice deformation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSlice {
    pub sigma: f64,
    pub control: BSplineGrid,
    pub field: DeformationField,
}

/// Draws a smooth random deformation of an `height x width` image: `sigma`
/// from `U[sigma_range]`, then i.i.d. `N(0, sigma^2)` lattice values (row
/// major, x before y), rendered with the cubic B-spline.
pub fn synth_deformation(
    cfg: &SynthConfig,
    height: usize,
    width: usize,
    rng: &mut Stream,
) -> Result<SynthSlice> {
    let [rows, cols] = cfg.control_grid;
    if height < rows || width < cols {
        return Err(Error::DimensionMismatch(format!(
            "image {height}x{width} is smaller than the {rows}x{cols} control grid"
        )));
    }
    let sigma = rng.uniform_range(cfg.sigma_range[0], cfg.sigma_range[1]);
    let values = (0..rows * cols)
        .map(|_| {
            let x = sigma * rng.normal();
            let y = sigma * rng.normal();
            [x, y]
        })
        .collect();
    let control = BSplineGrid { rows, cols, values };
    let disp = control.render(height, width);
    let field = DeformationField::from_displacement(height, width, |r, c| disp[r * width + c]);
    Ok(SynthSlice {
        sigma,
        control,
        field,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    #[default]
    None,
    Gaussian,
    Laplace,
}

/// Additive observation noise. `inter` is the scale (standard deviation or
/// Laplace `b`) for registrations across contrasts; intramodality
/// registrations use `intra * sqrt(separation)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub law: NoiseLaw,
    pub inter: f64,
    pub intra: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            law: NoiseLaw::None,
            inter: 0.0,
            intra: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec {
            law: NoiseLaw::Gaussian,
            inter: sigma,
            intra: sigma,
        }
    }

    pub fn laplace(b: f64) -> Self {
        NoiseSpec {
            law: NoiseLaw::Laplace,
            inter: b,
            intra: b,
        }
    }

    pub fn scale(&self, o: &ObservationEdge) -> f64 {
        if o.inter() {
            self.inter
        } else {
            self.intra * o.separation(o.from.contrast).sqrt()
        }
    }
}

/// Bound of the uniform garbage written into corrupted rows, pixels.
pub const GARBAGE_BOUND: f64 = 50.0;

/// Stream keys for a registration: identical for the same endpoint pair
/// whatever graph (and row index) it appears in.
pub fn edge_keys(o: &ObservationEdge) -> (u64, u64) {
    let a = ((o.from.contrast as u64) << 8) | o.to.contrast as u64;
    let b = ((o.from.level as u64 & 0xffff) << 16) | (o.to.level as u64 & 0xffff);
    (a, b)
}

/// `R_k = sum_l W_kl T_l + noise_k` on the latents' grid. Rows listed in
/// `outlier_rows` are replaced by i.i.d. `U[-50, 50]` values. Every row
/// draws from its own stream keyed by its endpoints.
pub fn synthesize_observations(
    graph: &StackGraph,
    latents: &[SvfField],
    noise: &NoiseSpec,
    outlier_rows: &BTreeSet<usize>,
    seed: u64,
) -> Result<Vec<SvfField>> {
    let l = graph.tree().len();
    if latents.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "{} latent fields for {l} tree edges",
            latents.len()
        )));
    }
    let first = latents
        .first()
        .ok_or_else(|| Error::Validation("no latent fields".into()))?;
    if latents.iter().any(|t| !t.same_grid(first)) {
        return Err(Error::DimensionMismatch(
            "latent fields on different grids".into(),
        ));
    }
    let (h, w, sp) = (first.height(), first.width(), first.spacing());
    graph
        .observations()
        .par_iter()
        .map(|o| {
            let (a, b) = edge_keys(o);
            let mut out = SvfField::zeros(h, w, sp);
            if outlier_rows.contains(&o.index) {
                let mut rng = Stream::for_purpose(seed, Purpose::OutlierGarbage, a, b);
                for axis in 0..2 {
                    for v in out.plane_mut(axis) {
                        *v = rng.uniform_range(-GARBAGE_BOUND, GARBAGE_BOUND);
                    }
                }
                return Ok(out);
            }
            for &(col, s) in graph.path().row(o.index) {
                for axis in 0..2 {
                    let src = latents[col].plane(axis);
                    for (d, v) in out.plane_mut(axis).iter_mut().zip(src) {
                        *d += f64::from(s) * v;
                    }
                }
            }
            let scale = noise.scale(o);
            if noise.law != NoiseLaw::None && scale > 0.0 {
                let mut rng = Stream::for_purpose(seed, Purpose::ObservationNoise, a, b);
                for axis in 0..2 {
                    for v in out.plane_mut(axis) {
                        *v += match noise.law {
                            NoiseLaw::Gaussian => scale * rng.normal(),
                            NoiseLaw::Laplace => rng.laplace(scale),
                            NoiseLaw::None => 0.0,
                        };
                    }
                }
            }
            Ok(out)
        })
        .collect()
}
