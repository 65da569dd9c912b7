//! Stationary velocity fields, dense deformations and image sections.
//!
//! Components are ordered `[xi1, xi2]` = `[horizontal (column), vertical (row)]`
//! throughout. SVF values are always expressed in full-resolution pixel units;
//! `spacing` records how many full-resolution pixels one grid step spans.

mod exp;
pub mod io;
mod resample;

pub use exp::{auto_steps, jacobian_determinant, svf_exp, Steps};
pub use resample::{
    control_dims, downsample_block_mean, downsample_mask_nearest, site_coordinate, upsample_svf, warp_image,
    Interpolation,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SvfField {
    height: usize,
    width: usize,
    spacing: f64,
    planes: [Vec<f64>; 2],
}

impl SvfField {
    /// Zero field.
    pub fn zeros(height: usize, width: usize, spacing: f64) -> Self {
        let n = height * width;
        SvfField {
            height,
            width,
            spacing,
            planes: [vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn from_planes(
        height: usize,
        width: usize,
        spacing: f64,
        xi1: Vec<f64>,
        xi2: Vec<f64>,
    ) -> Result<Self> {
        let f = SvfField {
            height,
            width,
            spacing,
            planes: [xi1, xi2],
        };
        f.validate()?;
        Ok(f)
    }

    /// Builds a field by evaluating `f(row, col) -> [xi1, xi2]` at every site.
    pub fn from_fn(
        height: usize,
        width: usize,
        spacing: f64,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let mut out = SvfField::zeros(height, width, spacing);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                let i = r * width + c;
                out.planes[0][i] = v[0];
                out.planes[1][i] = v[1];
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        if n == 0 {
            return Err(Error::Validation("SVF has zero sites".into()));
        }
        if self.planes[0].len() != n || self.planes[1].len() != n {
            return Err(Error::Validation(format!(
                "SVF data length {}+{} does not match {}x{}",
                self.planes[0].len(),
                self.planes[1].len(),
                self.height,
                self.width
            )));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Validation(format!(
                "SVF spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.planes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("SVF contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self, axis: usize) -> &[f64] {
        &self.planes[axis]
    }

    pub fn plane_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.planes[axis]
    }

    pub fn at(&self, row: usize, col: usize) -> [f64; 2] {
        let i = row * self.width + col;
        [self.planes[0][i], self.planes[1][i]]
    }

    pub fn set(&mut self, row: usize, col: usize, v: [f64; 2]) {
        let i = row * self.width + col;
        self.planes[0][i] = v[0];
        self.planes[1][i] = v[1];
    }

    pub fn same_grid(&self, other: &SvfField) -> bool {
        self.height == other.height && self.width == other.width && self.spacing == other.spacing
    }

    /// Largest vector norm over all sites, in pixel units.
    pub fn max_magnitude(&self) -> f64 {
        self.planes[0]
            .iter()
            .zip(&self.planes[1])
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Inverse transform in log space: element-wise negation.
    pub fn negate(&self) -> SvfField {
        let mut out = self.clone();
        out.planes.iter_mut().flatten().for_each(|v| *v = -*v);
        out
    }

    pub fn scaled(&self, s: f64) -> SvfField {
        let mut out = self.clone();
        out.planes.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// First-order Baker-Campbell-Hausdorff composition: `v + w`.
    pub fn compose_bch1(&self, other: &SvfField) -> Result<SvfField> {
        if !self.same_grid(other) {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}x{} (spacing {}) with {}x{} (spacing {})",
                self.height, self.width, self.spacing, other.height, other.width, other.spacing
            )));
        }
        let mut out = self.clone();
        for axis in 0..2 {
            for (a, b) in out.planes[axis].iter_mut().zip(&other.planes[axis]) {
                *a += *b;
            }
        }
        Ok(out)
    }

    /// Swaps the two component planes.
    pub fn swap_axes(&self) -> SvfField {
        let mut out = self.clone();
        out.planes.swap(0, 1);
        out
    }
}

/// Dense map from each pixel to an absolute target coordinate `[x, y]`
/// (column, row), in pixel units of the grid it is defined on.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    height: usize,
    width: usize,
    mapping: Vec<[f64; 2]>,
}

impl DeformationField {
    pub fn identity(height: usize, width: usize) -> Self {
        let mut mapping = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                mapping.push([c as f64, r as f64]);
            }
        }
        DeformationField {
            height,
            width,
            mapping,
        }
    }

    pub fn from_mapping(height: usize, width: usize, mapping: Vec<[f64; 2]>) -> Result<Self> {
        if mapping.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mapping has {} entries for {}x{}",
                mapping.len(),
                height,
                width
            )));
        }
        if mapping.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("deformation contains non-finite values".into()));
        }
        Ok(DeformationField {
            height,
            width,
            mapping,
        })
    }

    /// Builds a field from per-pixel displacements `f(row, col) -> [dx, dy]`.
    pub fn from_displacement(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let mut mapping = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let d = f(r, c);
                mapping.push([c as f64 + d[0], r as f64 + d[1]]);
            }
        }
        DeformationField {
            height,
            width,
            mapping,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mapping(&self) -> &[[f64; 2]] {
        &self.mapping
    }

    pub fn at(&self, row: usize, col: usize) -> [f64; 2] {
        self.mapping[row * self.width + col]
    }

    pub fn displacement(&self, row: usize, col: usize) -> [f64; 2] {
        let m = self.at(row, col);
        [m[0] - col as f64, m[1] - row as f64]
    }

    pub fn same_dims(&self, other: &DeformationField) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Evaluates the map at a fractional coordinate, interpolating the
    /// displacement bilinearly with clamp-to-edge lookups.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let (x0, x1, fx) = bracket(x, self.width);
        let (y0, y1, fy) = bracket(y, self.height);
        let d = |r: usize, c: usize| self.displacement(r, c);
        let (a, b, c, e) = (d(y0, x0), d(y0, x1), d(y1, x0), d(y1, x1));
        let mut out = [0.0; 2];
        for k in 0..2 {
            let top = lerp(a[k], b[k], fx);
            let bottom = lerp(c[k], e[k], fx);
            out[k] = lerp(top, bottom, fy);
        }
        [x + out[0], y + out[1]]
    }

    /// `self ∘ inner`: the map `p -> self(inner(p))`.
    pub fn compose(&self, inner: &DeformationField) -> Result<DeformationField> {
        if !self.same_dims(inner) {
            return Err(Error::DimensionMismatch(format!(
                "compose {}x{} with {}x{}",
                self.height, self.width, inner.height, inner.width
            )));
        }
        let mapping = inner.mapping.iter().map(|p| self.sample(p[0], p[1])).collect();
        Ok(DeformationField {
            height: self.height,
            width: self.width,
            mapping,
        })
    }

    /// Largest displacement norm over pixels at least `margin` away from the border.
    pub fn max_interior_displacement(&self, margin: usize) -> f64 {
        let mut best: f64 = 0.0;
        for r in margin..self.height.saturating_sub(margin) {
            for c in margin..self.width.saturating_sub(margin) {
                let d = self.displacement(r, c);
                best = best.max(d[0].hypot(d[1]));
            }
        }
        best
    }

    /// Approximate inverse by fixed-point iteration on the displacement:
    /// `u_inv(y) = -u(y + u_inv(y))`. Returns the inverse and a per-pixel
    /// convergence flag.
    pub fn invert_fixed_point(&self, max_iters: usize, tol: f64) -> (DeformationField, Vec<bool>) {
        let mut inv = vec![[0.0f64; 2]; self.mapping.len()];
        let mut converged = vec![false; self.mapping.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                let i = r * self.width + c;
                let (px, py) = (c as f64, r as f64);
                let mut u = [0.0f64; 2];
                for _ in 0..max_iters {
                    let m = self.sample(px + u[0], py + u[1]);
                    let fwd = [m[0] - (px + u[0]), m[1] - (py + u[1])];
                    let next = [-fwd[0], -fwd[1]];
                    let change = (next[0] - u[0]).hypot(next[1] - u[1]);
                    u = next;
                    if change < tol {
                        converged[i] = true;
                        break;
                    }
                }
                inv[i] = [px + u[0], py + u[1]];
            }
        }
        (
            DeformationField {
                height: self.height,
                width: self.width,
                mapping: inv,
            },
            converged,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSection {
    pub contrast: usize,
    pub level: i64,
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    mask: Vec<u8>,
}

impl ImageSection {
    pub fn new(
        contrast: usize,
        level: i64,
        height: usize,
        width: usize,
        pixels: Vec<f64>,
        mask: Vec<u8>,
    ) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for {}x{} image",
                pixels.len(),
                height,
                width
            )));
        }
        if mask.len() != pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries, image has {}",
                mask.len(),
                pixels.len()
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(Error::Validation("mask values must be 0 or 1".into()));
        }
        Ok(ImageSection {
            contrast,
            level,
            height,
            width,
            pixels,
            mask,
        })
    }

    /// Image with an all-ones mask.
    pub fn unmasked(
        contrast: usize,
        level: i64,
        height: usize,
        width: usize,
        pixels: Vec<f64>,
    ) -> Result<Self> {
        let n = pixels.len();
        Self::new(contrast, level, height, width, pixels, vec![1; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Clamped bracketing indices and fraction for a coordinate on an axis of `n` samples.
#[inline]
pub(crate) fn bracket(x: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let x = x.clamp(0.0, max);
    let x0 = x.floor();
    let i0 = x0 as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, x - x0)
}

/// Bilinear sample of a row-major plane with clamp-to-edge.
#[inline]
pub(crate) fn sample_plane(plane: &[f64], height: usize, width: usize, x: f64, y: f64) -> f64 {
    let (x0, x1, fx) = bracket(x, width);
    let (y0, y1, fy) = bracket(y, height);
    let top = lerp(plane[y0 * width + x0], plane[y0 * width + x1], fx);
    let bottom = lerp(plane[y1 * width + x0], plane[y1 * width + x1], fx);
    lerp(top, bottom, fy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negate_and_compose_constants() {
        let v = SvfField::from_fn(4, 5, 1.0, |_, _| [1.5, -2.0]);
        let n = v.negate();
        assert_eq!(n.at(2, 3), [-1.5, 2.0]);
        let zero = SvfField::zeros(4, 5, 1.0);
        assert_eq!(zero.negate(), zero);
        let w = SvfField::from_fn(4, 5, 1.0, |_, _| [0.5, 4.0]);
        assert_eq!(v.compose_bch1(&w).unwrap().at(0, 0), [2.0, 2.0]);
        assert_eq!(v.compose_bch1(&zero).unwrap(), v);
    }

    #[test]
    fn compose_rejects_mismatch() {
        let v = SvfField::zeros(4, 5, 1.0);
        let w = SvfField::zeros(5, 4, 1.0);
        assert!(matches!(v.compose_bch1(&w), Err(Error::DimensionMismatch(_))));
        let s = SvfField::zeros(4, 5, 2.0);
        assert!(v.compose_bch1(&s).is_err());
    }

    #[test]
    fn validation_catches_nan_and_bad_spacing() {
        assert!(SvfField::from_planes(1, 2, 1.0, vec![0.0, f64::NAN], vec![0.0; 2]).is_err());
        assert!(SvfField::from_planes(1, 2, 0.0, vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(SvfField::from_planes(1, 2, 1.0, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(SvfField::from_planes(1, 2, 1.0, vec![0.0; 2], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn identity_sample_and_compose() {
        let id = DeformationField::identity(6, 7);
        assert_eq!(id.sample(2.25, 3.5), [2.25, 3.5]);
        let t = DeformationField::from_displacement(6, 7, |_, _| [1.0, 0.0]);
        assert_eq!(t.compose(&id).unwrap(), t);
        assert_eq!(id.compose(&t).unwrap(), t);
    }

    #[test]
    fn fixed_point_inverse_of_translation() {
        let t = DeformationField::from_displacement(8, 8, |_, _| [0.75, -0.5]);
        let (inv, ok) = t.invert_fixed_point(20, 1e-3);
        assert!(ok.iter().all(|&b| b));
        let d = inv.displacement(4, 4);
        assert!((d[0] + 0.75).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn image_section_checks_dims() {
        assert!(ImageSection::new(0, 1, 2, 2, vec![0.0; 4], vec![1; 3]).is_err());
        assert!(ImageSection::new(0, 1, 2, 2, vec![0.0; 4], vec![2; 4]).is_err());
        assert!(ImageSection::new(0, 1, 2, 2, vec![0.0; 4], vec![0, 1, 1, 0]).is_ok());
    }
}
