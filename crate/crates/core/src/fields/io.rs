//! `.svf` containers and binary PGM/PPM images.
//!
//! `.svf` layout (little endian): magic `SVF1`, `u32` height, `u32` width,
//! `u32` channels (always 2), `f64` spacing, then `height * width` `f32`
//! values of the xi1 plane in row-major order followed by the xi2 plane.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::SvfField;
use crate::error::{Error, Result};

const SVF_MAGIC: &[u8; 4] = b"SVF1";
const SVF_HEADER: usize = 4 + 4 * 3 + 8;

pub fn encode_svf(v: &SvfField) -> Vec<u8> {
    let mut out = Vec::with_capacity(SVF_HEADER + v.len() * 8);
    out.extend_from_slice(SVF_MAGIC);
    out.extend_from_slice(&(v.height() as u32).to_le_bytes());
    out.extend_from_slice(&(v.width() as u32).to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&v.spacing().to_le_bytes());
    for axis in 0..2 {
        for &a in v.plane(axis) {
            out.extend_from_slice(&(a as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_svf(bytes: &[u8], path: &Path) -> Result<SvfField> {
    let bad = |why: &str| Error::format(path, why);
    if bytes.len() < SVF_HEADER || &bytes[..4] != SVF_MAGIC {
        return Err(bad("missing SVF1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (h, w, channels) = (u32_at(4), u32_at(8), u32_at(12));
    if channels != 2 {
        return Err(bad(&format!("expected 2 channels, found {channels}")));
    }
    let spacing = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let n = h.checked_mul(w).ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() != SVF_HEADER + n * 8 {
        return Err(bad(&format!(
            "expected {} bytes of payload, found {}",
            n * 8,
            bytes.len() - SVF_HEADER
        )));
    }
    let plane = |k: usize| -> Vec<f64> {
        let start = SVF_HEADER + k * n * 4;
        bytes[start..start + n * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect()
    };
    SvfField::from_planes(h, w, spacing, plane(0), plane(1)).map_err(|e| bad(&e.to_string()))
}

pub fn write_svf(path: &Path, v: &SvfField) -> Result<()> {
    fs::write(path, encode_svf(v)).map_err(|e| Error::io(path, e))
}

pub fn read_svf(path: &Path) -> Result<SvfField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_svf(&bytes, path)
}

/// Grayscale raster as read from a PGM/PPM file.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray {
    pub height: usize,
    pub width: usize,
    pub max_value: u16,
    pub data: Vec<u16>,
}

/// Encodes 8-bit or 16-bit binary PGM (`P5`).
pub fn encode_pgm(g: &Gray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", g.width, g.height, g.max_value).into_bytes();
    if g.max_value < 256 {
        out.extend(g.data.iter().map(|&v| v as u8));
    } else {
        for &v in &g.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes binary PGM (`P5`) or PPM (`P6`, averaged to gray).
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Gray> {
    let bad = |why: &str| Error::format(path, why);
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| bad("empty file"))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let mut num = || -> Result<usize> {
        next_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad header field"))
    };
    let width = num()?;
    let height = num()?;
    let max_value = num()?;
    if max_value == 0 || max_value > 65535 {
        return Err(bad("max value out of range"));
    }
    // single whitespace byte after the header
    pos += 1;
    let bpp = if max_value < 256 { 1 } else { 2 };
    let need = width * height * channels * bpp;
    if bytes.len() < pos + need {
        return Err(bad("truncated raster"));
    }
    let raw = &bytes[pos..pos + need];
    let sample = |i: usize| -> u32 {
        if bpp == 1 {
            raw[i] as u32
        } else {
            u16::from_be_bytes([raw[2 * i], raw[2 * i + 1]]) as u32
        }
    };
    let data = (0..width * height)
        .map(|p| {
            let sum: u32 = (0..channels).map(|k| sample(p * channels + k)).sum();
            ((sum + channels as u32 / 2) / channels as u32) as u16
        })
        .collect();
    Ok(Gray {
        height,
        width,
        max_value: max_value as u16,
        data,
    })
}

pub fn read_pnm(path: &Path) -> Result<Gray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

pub fn write_pgm(path: &Path, g: &Gray) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(g)).map_err(|e| Error::io(path, e))
}

/// Quantises intensities in `[0, 1]` to an 8-bit raster.
pub fn gray_from_unit(height: usize, width: usize, pixels: &[f64]) -> Gray {
    Gray {
        height,
        width,
        max_value: 255,
        data: pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u16)
            .collect(),
    }
}

/// Intensities scaled to `[0, 1]` by the raster's max value.
pub fn unit_from_gray(g: &Gray) -> Vec<f64> {
    g.data.iter().map(|&v| v as f64 / g.max_value as f64).collect()
}

/// Any nonzero sample counts as tissue.
pub fn mask_from_gray(g: &Gray) -> Vec<u8> {
    g.data.iter().map(|&v| (v != 0) as u8).collect()
}

pub fn gray_from_mask(height: usize, width: usize, mask: &[u8]) -> Gray {
    Gray {
        height,
        width,
        max_value: 255,
        data: mask.iter().map(|&m| if m != 0 { 255 } else { 0 }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn svf_header_layout() {
        let v = SvfField::from_fn(2, 3, 8.0, |r, c| [r as f64, c as f64 + 0.5]);
        let b = encode_svf(&v);
        assert_eq!(&b[..4], b"SVF1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 8.0);
        assert_eq!(b.len(), 24 + 6 * 8);
        // first xi2 value sits after the whole xi1 plane
        assert_eq!(f32::from_le_bytes(b[24 + 24..24 + 28].try_into().unwrap()), 0.5);
    }

    #[test]
    fn svf_rejects_garbage() {
        let p = Path::new("x.svf");
        assert!(decode_svf(b"SVF0", p).is_err());
        let mut b = encode_svf(&SvfField::zeros(2, 2, 1.0));
        b.pop();
        assert!(decode_svf(&b, p).is_err());
        let mut b = encode_svf(&SvfField::zeros(2, 2, 1.0));
        b[12] = 3;
        assert!(decode_svf(&b, p).is_err());
    }

    #[test]
    fn pnm_with_comment_and_ppm() {
        let p = Path::new("x.pgm");
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([10u8, 200]);
        let g = decode_pnm(&bytes, p).unwrap();
        assert_eq!((g.width, g.height, g.data.clone()), (2, 1, vec![10, 200]));

        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend([30u8, 60, 90]);
        assert_eq!(decode_pnm(&bytes, p).unwrap().data, vec![60]);
    }

    proptest! {
        #[test]
        fn svf_roundtrip_f32_exact(h in 1usize..6, w in 1usize..6, vals in proptest::collection::vec(-100.0f32..100.0, 72)) {
            let n = h * w;
            let xi1: Vec<f64> = vals[..n].iter().map(|&a| a as f64).collect();
            let xi2: Vec<f64> = vals[36..36 + n].iter().map(|&a| a as f64).collect();
            let v = SvfField::from_planes(h, w, 2.5, xi1, xi2).unwrap();
            let back = decode_svf(&encode_svf(&v), Path::new("t.svf")).unwrap();
            prop_assert_eq!(back, v);
        }

        #[test]
        fn pgm_roundtrip(w in 1usize..8, h in 1usize..8, wide in any::<bool>(), seed in any::<u16>()) {
            let max_value = if wide { 4095 } else { 255 };
            let data = (0..w * h).map(|i| ((i as u32 * 37 + seed as u32) % (max_value as u32 + 1)) as u16).collect();
            let g = Gray { height: h, width: w, max_value, data };
            prop_assert_eq!(decode_pnm(&encode_pgm(&g), Path::new("t.pgm")).unwrap(), g);
        }
    }
}
