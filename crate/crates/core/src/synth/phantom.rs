use crate::error::Result;
use crate::fields::{svf_exp, upsample_svf, warp_image, ImageSection, Interpolation, Steps, SvfField};
use crate::rng::{Purpose, Stream};

const BLOBS: usize = 8;

/// Reference slice at `level`: a sum of Gaussian blobs whose centres drift
/// slowly with the level, inside an elliptical tissue mask.
pub fn phantom(seed: u64, height: usize, width: usize, level: i64) -> Result<ImageSection> {
    let mut rng = Stream::for_purpose(seed, Purpose::Phantom, 0, 0);
    let blobs: Vec<[f64; 6]> = (0..BLOBS)
        .map(|_| {
            [
                rng.uniform_range(0.25, 0.75),
                rng.uniform_range(0.25, 0.75),
                rng.uniform_range(-0.01, 0.01),
                rng.uniform_range(-0.01, 0.01),
                rng.uniform_range(0.06, 0.16),
                rng.uniform_range(0.4, 1.0),
            ]
        })
        .collect();
    let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let mut pixels = Vec::with_capacity(height * width);
    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = (norm(c, width), norm(r, height));
            let inside = ((x - 0.5) / 0.45).powi(2) + ((y - 0.5) / 0.45).powi(2) <= 1.0;
            let mut v = 0.0;
            for b in &blobs {
                let (cx, cy) = (b[0] + b[2] * level as f64, b[1] + b[3] * level as f64);
                v += b[5] * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * b[4] * b[4])).exp();
            }
            pixels.push(if inside { 1.0 - (-v).exp() } else { 0.0 });
            mask.push(u8::from(inside));
        }
    }
    ImageSection::new(0, level, height, width, pixels, mask)
}

/// Histology section of `contrast` seen through the spoke latent `t`:
/// the reference pulled back through `exp(-t)` with a contrast-specific
/// intensity map.
pub fn section_from_reference(
    reference: &ImageSection,
    contrast: usize,
    t: &SvfField,
) -> Result<ImageSection> {
    let (h, w) = (reference.height(), reference.width());
    let inv = svf_exp(&upsample_svf(t, h, w)?.negate(), Steps::Auto)?;
    let warped = warp_image(reference, &inv, Interpolation::Bilinear, 0.0)?;
    let pixels = warped
        .pixels()
        .iter()
        .zip(warped.mask())
        .map(|(&v, &m)| match (m, contrast % 2) {
            (0, _) => 0.0,
            (_, 1) => v.max(0.0).sqrt(),
            _ => 1.0 - v,
        })
        .collect();
    ImageSection::new(contrast, reference.level, h, w, pixels, warped.mask().to_vec())
}
