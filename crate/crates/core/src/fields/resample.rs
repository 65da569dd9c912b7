use super::{sample_plane, DeformationField, ImageSection, SvfField};
use crate::error::{Error, Result};

/// Number of control sites along an axis of `n` pixels for a reduction
/// `factor`: `ceil((n - 1) / factor) + 1`. Sites are corner-aligned, the
/// first on pixel 0 and the last on pixel `n - 1`.
pub fn control_dims(n: usize, factor: usize) -> usize {
    assert!(factor >= 1 && n >= 1);
    (n - 1).div_ceil(factor) + 1
}

/// Fine-grid coordinate of coarse site `i` when `coarse` sites span `fine` pixels.
pub fn site_coordinate(i: usize, coarse: usize, fine: usize) -> f64 {
    if coarse <= 1 {
        0.0
    } else {
        (i * (fine - 1)) as f64 / (coarse - 1) as f64
    }
}

fn coarse_coordinate(t: usize, fine: usize, coarse: usize) -> f64 {
    if fine <= 1 {
        0.0
    } else {
        (t * (coarse - 1)) as f64 / (fine - 1) as f64
    }
}

/// Corner-aligned bilinear upsampling of each component.
pub fn upsample_svf(v: &SvfField, target_h: usize, target_w: usize) -> Result<SvfField> {
    v.validate()?;
    let (h, w) = (v.height(), v.width());
    if target_h < h || target_w < w {
        return Err(Error::DimensionMismatch(format!(
            "cannot upsample {h}x{w} to smaller {target_h}x{target_w}"
        )));
    }
    let spacing = if h > 1 {
        v.spacing() * (h - 1) as f64 / (target_h - 1) as f64
    } else if w > 1 {
        v.spacing() * (w - 1) as f64 / (target_w - 1) as f64
    } else {
        v.spacing()
    };
    let mut out = SvfField::zeros(target_h, target_w, spacing);
    for axis in 0..2 {
        let src = v.plane(axis);
        let dst = out.plane_mut(axis);
        for r in 0..target_h {
            let y = coarse_coordinate(r, target_h, h);
            for c in 0..target_w {
                let x = coarse_coordinate(c, target_w, w);
                dst[r * target_w + c] = sample_plane(src, h, w, x, y);
            }
        }
    }
    Ok(out)
}

/// Nearest coarse site index for fine pixel `t`.
fn owner(t: usize, fine: usize, coarse: usize) -> usize {
    (coarse_coordinate(t, fine, coarse).round() as usize).min(coarse - 1)
}

/// Block-mean reduction onto a corner-aligned control grid: each control
/// value is the mean of the full-resolution pixels nearest to that site.
pub fn downsample_block_mean(v: &SvfField, target_h: usize, target_w: usize) -> Result<SvfField> {
    v.validate()?;
    let (h, w) = (v.height(), v.width());
    if target_h > h || target_w > w || target_h == 0 || target_w == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot downsample {h}x{w} to {target_h}x{target_w}"
        )));
    }
    if target_h == h && target_w == w {
        return Ok(v.clone());
    }
    let spacing = if target_h > 1 {
        v.spacing() * (h - 1) as f64 / (target_h - 1) as f64
    } else if target_w > 1 {
        v.spacing() * (w - 1) as f64 / (target_w - 1) as f64
    } else {
        v.spacing() * h.max(w) as f64
    };
    let mut out = SvfField::zeros(target_h, target_w, spacing);
    let mut counts = vec![0usize; target_h * target_w];
    let rows: Vec<usize> = (0..h).map(|r| owner(r, h, target_h)).collect();
    let cols: Vec<usize> = (0..w).map(|c| owner(c, w, target_w)).collect();
    for axis in 0..2 {
        let src = v.plane(axis);
        let dst = out.plane_mut(axis);
        for r in 0..h {
            for c in 0..w {
                dst[rows[r] * target_w + cols[c]] += src[r * w + c];
            }
        }
    }
    for r in 0..h {
        for c in 0..w {
            counts[rows[r] * target_w + cols[c]] += 1;
        }
    }
    for axis in 0..2 {
        for (d, &n) in out.plane_mut(axis).iter_mut().zip(&counts) {
            *d /= n as f64;
        }
    }
    Ok(out)
}

/// Nearest-neighbour lookup of a mask at control-site positions.
pub fn downsample_mask_nearest(
    mask: &[u8],
    height: usize,
    width: usize,
    target_h: usize,
    target_w: usize,
) -> Result<Vec<u8>> {
    if mask.len() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} entries for {height}x{width}",
            mask.len()
        )));
    }
    if target_h > height || target_w > width {
        return Err(Error::DimensionMismatch(format!(
            "control grid {target_h}x{target_w} larger than mask {height}x{width}"
        )));
    }
    let mut out = Vec::with_capacity(target_h * target_w);
    for i in 0..target_h {
        let r = site_coordinate(i, target_h, height).round() as usize;
        for j in 0..target_w {
            let c = site_coordinate(j, target_w, width).round() as usize;
            out.push(mask[r * width + c]);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

const BOUNDS_EPS: f64 = 1e-9;

/// Pulls `img` back through `d`: `out(p) = img(d(p))`. Samples that fall
/// outside the image take `fill`; the mask is always resampled with nearest
/// neighbour and is 0 outside.
pub fn warp_image(
    img: &ImageSection,
    d: &DeformationField,
    interpolation: Interpolation,
    fill: f64,
) -> Result<ImageSection> {
    let (h, w) = (img.height(), img.width());
    if d.height() != h || d.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "image {h}x{w} vs deformation {}x{}",
            d.height(),
            d.width()
        )));
    }
    let inside = |x: f64, y: f64| {
        x >= -BOUNDS_EPS
            && y >= -BOUNDS_EPS
            && x <= (w - 1) as f64 + BOUNDS_EPS
            && y <= (h - 1) as f64 + BOUNDS_EPS
    };
    let mut pixels = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for &[x, y] in d.mapping() {
        if !inside(x, y) {
            pixels.push(fill);
            mask.push(0);
            continue;
        }
        let (xn, yn) = (
            (x.round().max(0.0) as usize).min(w - 1),
            (y.round().max(0.0) as usize).min(h - 1),
        );
        mask.push(img.mask()[yn * w + xn]);
        pixels.push(match interpolation {
            Interpolation::Nearest => img.pixels()[yn * w + xn],
            Interpolation::Bilinear => sample_plane(img.pixels(), h, w, x, y),
        });
    }
    ImageSection::new(img.contrast, img.level, h, w, pixels, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_dims_rule() {
        assert_eq!(control_dims(64, 8), 9);
        assert_eq!(control_dims(65, 8), 9);
        assert_eq!(control_dims(66, 8), 10);
        assert_eq!(control_dims(17, 1), 17);
        assert_eq!(control_dims(1, 8), 1);
    }

    #[test]
    fn upsample_same_size_is_identity() {
        let v = SvfField::from_fn(5, 4, 1.0, |r, c| [r as f64 * 0.3, c as f64 - 1.0]);
        assert_eq!(upsample_svf(&v, 5, 4).unwrap(), v);
    }

    #[test]
    fn upsample_constant_and_ramp() {
        let v = SvfField::from_fn(5, 5, 8.0, |_, _| [1.25, -3.0]);
        let u = upsample_svf(&v, 37, 29).unwrap();
        assert!(u.plane(0).iter().all(|&a| a == 1.25));
        assert!(u.plane(1).iter().all(|&a| a == -3.0));

        // ramp defined in fine-pixel coordinates: f(y, x) = 0.5 x - 0.25 y + 2
        let ramp = |y: f64, x: f64| [0.5 * x - 0.25 * y + 2.0, 0.1 * y];
        let coarse = SvfField::from_fn(5, 5, 8.0, |r, c| ramp(r as f64 * 8.0, c as f64 * 8.0));
        let fine = upsample_svf(&coarse, 33, 33).unwrap();
        assert_eq!(fine.spacing(), 1.0);
        for r in 0..33 {
            for c in 0..33 {
                let want = ramp(r as f64, c as f64);
                let got = fine.at(r, c);
                assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn upsample_preserves_source_sites_on_integer_multiple() {
        let v = SvfField::from_fn(4, 3, 1.0, |r, c| [(r * 7 + c) as f64 * 0.37, -(c as f64)]);
        let u = upsample_svf(&v, 3 * 3 + 1, 2 * 5 + 1).unwrap();
        for r in 0..4 {
            for c in 0..3 {
                assert_eq!(u.at(r * 3, c * 5), v.at(r, c));
            }
        }
    }

    #[test]
    fn upsample_rejects_smaller_target() {
        let v = SvfField::zeros(5, 5, 1.0);
        assert!(upsample_svf(&v, 4, 5).is_err());
    }

    #[test]
    fn block_mean_of_constant_and_identity_path() {
        let v = SvfField::from_fn(64, 64, 1.0, |_, _| [3.0, 1.0]);
        let d = downsample_block_mean(&v, 9, 9).unwrap();
        assert!(d.plane(0).iter().all(|&a| (a - 3.0).abs() < 1e-12));
        assert!((d.spacing() - 63.0 / 8.0).abs() < 1e-12);
        assert_eq!(downsample_block_mean(&v, 64, 64).unwrap(), v);
    }

    #[test]
    fn mask_nearest_on_corner_sites() {
        let mut mask = vec![0u8; 9 * 9];
        mask[0] = 1;
        mask[8 * 9 + 8] = 1;
        let m = downsample_mask_nearest(&mask, 9, 9, 3, 3).unwrap();
        assert_eq!(m, vec![1, 0, 0, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn warp_identity_and_translation() {
        let pixels: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let img = ImageSection::unmasked(1, 1, 5, 6, pixels).unwrap();
        let id = DeformationField::identity(5, 6);
        let out = warp_image(&img, &id, Interpolation::Bilinear, 0.0).unwrap();
        assert_eq!(out, img);

        let shift = DeformationField::from_displacement(5, 6, |_, _| [2.0, 0.0]);
        let out = warp_image(&img, &shift, Interpolation::Nearest, -1.0).unwrap();
        for r in 0..5 {
            for c in 0..6 {
                if c + 2 < 6 {
                    assert_eq!(out.pixel(r, c), img.pixel(r, c + 2));
                    assert_eq!(out.mask()[r * 6 + c], 1);
                } else {
                    assert_eq!(out.pixel(r, c), -1.0);
                    assert_eq!(out.mask()[r * 6 + c], 0);
                }
            }
        }
    }

    #[test]
    fn warp_rejects_mismatch() {
        let img = ImageSection::unmasked(1, 1, 5, 6, vec![0.0; 30]).unwrap();
        let id = DeformationField::identity(6, 5);
        assert!(warp_image(&img, &id, Interpolation::Nearest, 0.0).is_err());
    }
}
