//! Lossy compression modeled as an encode-decode round trip.
//!
//! `DctQuant` reproduces baseline JPEG distortion without entropy coding:
//! YCbCr conversion, optional 4:2:0 chroma subsampling, 8x8 orthonormal
//! DCT-II, quantization with quality-scaled Annex K tables, and the inverse.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{rgb_to_ycbcr, ycbcr_to_rgb, ColorSpace, Image};
use crate::resample::{resample, Filter};

/// ITU-T T.81 Annex K, Table K.1, in natural (row-major) order.
pub const LUMA_BASE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// ITU-T T.81 Annex K, Table K.2.
pub const CHROMA_BASE_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressOp {
    Identity,
    UniformQuant { step: f32 },
    DctQuant { quality: u8, chroma_subsample: bool },
}

impl CompressOp {
    /// JPEG-like quantization at `quality` with 4:2:0 chroma.
    pub fn jpeg(quality: u8) -> Self {
        CompressOp::DctQuant {
            quality,
            chroma_subsample: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CompressOp::Identity => Ok(()),
            CompressOp::UniformQuant { step } => {
                if step.is_finite() && step > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "quantization step must be > 0, got {step}"
                    )))
                }
            }
            CompressOp::DctQuant { quality, .. } => {
                if (1..=100).contains(&quality) {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "quality must be in 1..=100, got {quality}"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for CompressOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressOp::Identity => f.write_str("identity"),
            CompressOp::UniformQuant { step } => write!(f, "uniform:{step}"),
            CompressOp::DctQuant {
                quality,
                chroma_subsample,
            } => write!(f, "dct:{quality},sub={chroma_subsample}"),
        }
    }
}

/// libjpeg quality scaling: `s = 5000/q` below 50, `200 - 2q` otherwise.
pub fn quality_scale(quality: u8) -> u32 {
    let q = u32::from(quality);
    if q < 50 {
        5000 / q
    } else {
        200 - 2 * q
    }
}

pub fn scaled_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let s = quality_scale(quality);
    base.map(|b| ((u32::from(b) * s + 50) / 100).clamp(1, 255) as u16)
}

const N: usize = 8;

/// Orthonormal DCT-II basis, `basis[u][x] = c(u) cos((2x + 1) u pi / 16)`.
fn dct_basis() -> &'static [[f64; N]; N] {
    static BASIS: OnceLock<[[f64; N]; N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; N]; N];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 {
                (1.0 / N as f64).sqrt()
            } else {
                (2.0 / N as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = c * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / (2 * N) as f64).cos();
            }
        }
        b
    })
}

pub fn forward_dct(block: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    // Rows.
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|x| basis[u][x] * block[y * N + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    // Columns.
    for v in 0..N {
        for u in 0..N {
            out[v * N + u] = (0..N).map(|y| basis[v][y] * tmp[y * N + u]).sum();
        }
    }
    out
}

pub fn inverse_dct(coeffs: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|v| basis[v][y] * coeffs[v * N + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..N {
        for x in 0..N {
            out[y * N + x] = (0..N).map(|u| basis[u][x] * tmp[y * N + u]).sum();
        }
    }
    out
}

/// Quantizes one plane of `[0, 1]` samples through the 8x8 DCT.
fn quantize_plane(plane: &[f32], w: usize, h: usize, table: &[u16; 64]) -> Vec<f32> {
    let bw = w.div_ceil(N);
    let bh = h.div_ceil(N);
    let mut out = vec![0.0f32; w * h];
    let mut block = [0.0f64; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..N {
                let sy = (by * N + y).min(h - 1);
                for x in 0..N {
                    let sx = (bx * N + x).min(w - 1);
                    block[y * N + x] = f64::from(plane[sy * w + sx]) * 255.0 - 128.0;
                }
            }
            let mut coeffs = forward_dct(&block);
            for (c, &q) in coeffs.iter_mut().zip(table) {
                let q = f64::from(q);
                *c = (*c / q).round() * q;
            }
            let rec = inverse_dct(&coeffs);
            for y in 0..N {
                let oy = by * N + y;
                if oy >= h {
                    break;
                }
                for x in 0..N {
                    let ox = bx * N + x;
                    if ox >= w {
                        break;
                    }
                    out[oy * w + ox] = ((rec[y * N + x] + 128.0) / 255.0) as f32;
                }
            }
        }
    }
    out
}

/// 2x2 box average with edge replication for odd sizes.
fn box_halve(plane: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(hw * hh);
    for y in 0..hh {
        let (y0, y1) = (2 * y, (2 * y + 1).min(h - 1));
        for x in 0..hw {
            let (x0, x1) = (2 * x, (2 * x + 1).min(w - 1));
            let s = f64::from(plane[y0 * w + x0])
                + f64::from(plane[y0 * w + x1])
                + f64::from(plane[y1 * w + x0])
                + f64::from(plane[y1 * w + x1]);
            out.push((s / 4.0) as f32);
        }
    }
    (out, hw, hh)
}

fn dct_roundtrip(img: &Image, quality: u8, chroma_subsample: bool) -> Result<Image> {
    let luma_table = scaled_table(&LUMA_BASE_TABLE, quality);
    let chroma_table = scaled_table(&CHROMA_BASE_TABLE, quality);
    let (w, h) = (img.width(), img.height());
    match img.color_space() {
        ColorSpace::Gray => Ok(Image::from_parts(
            w,
            h,
            ColorSpace::Gray,
            quantize_plane(img.plane(0), w, h, &luma_table),
        )),
        ColorSpace::Rgb => {
            let ycc = rgb_to_ycbcr(img)?;
            let mut data = quantize_plane(ycc.plane(0), w, h, &luma_table);
            for c in 1..3 {
                if chroma_subsample {
                    let (small, hw, hh) = box_halve(ycc.plane(c), w, h);
                    let q = quantize_plane(&small, hw, hh, &chroma_table);
                    let q = Image::from_parts(hw, hh, ColorSpace::Gray, q);
                    let up = resample(&q, 2 * hw, 2 * hh, Filter::Triangle).crop(w, h)?;
                    data.extend_from_slice(up.data());
                } else {
                    data.extend(quantize_plane(ycc.plane(c), w, h, &chroma_table));
                }
            }
            ycbcr_to_rgb(&Image::from_parts(w, h, ColorSpace::YCbCr, data))
        }
        ColorSpace::YCbCr => Err(Error::contract(
            "DCT quantization expects RGB or Gray input",
        )),
    }
}

pub fn compress_roundtrip(img: &Image, op: &CompressOp) -> Result<Image> {
    op.validate()?;
    match *op {
        CompressOp::Identity => Ok(img.clone()),
        CompressOp::UniformQuant { step } => Ok(img.map(|v| (v / step).round() * step)),
        CompressOp::DctQuant {
            quality,
            chroma_subsample,
        } => dct_roundtrip(img, quality, chroma_subsample),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double-sum DCT-II, independent of the separable implementation.
    fn naive_dct(block: &[f64; 64]) -> [f64; 64] {
        let mut out = [0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                let cu = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
                let cv = if v == 0 { (0.125f64).sqrt() } else { 0.5 };
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
                            * ((2 * y + 1) as f64 * v as f64 * std::f64::consts::PI / 16.0).cos();
                    }
                }
                out[v * 8 + u] = cu * cv * s;
            }
        }
        out
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, cs: ColorSpace) -> Image {
        let data = (0..w * h * cs.channels())
            .map(|_| rng.random::<f32>())
            .collect();
        Image::new(w, h, cs, data).unwrap()
    }

    #[test]
    fn dct_matches_naive_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let block: [f64; 64] = std::array::from_fn(|_| rng.random_range(-128.0..128.0));
            let fast = forward_dct(&block);
            let slow = naive_dct(&block);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9);
            }
            let back = inverse_dct(&fast);
            for (a, b) in back.iter().zip(&block) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quality_scaling_examples() {
        assert_eq!(quality_scale(50), 100);
        assert_eq!(scaled_table(&LUMA_BASE_TABLE, 50), LUMA_BASE_TABLE);
        assert_eq!(quality_scale(10), 500);
        assert_eq!(scaled_table(&LUMA_BASE_TABLE, 10)[0], 80);
        assert_eq!(scaled_table(&LUMA_BASE_TABLE, 100), [1; 64]);
        // Clamped at 255: 99 * 5000 / 100 at q=1.
        assert_eq!(scaled_table(&CHROMA_BASE_TABLE, 1)[63], 255);
    }

    #[test]
    fn identity_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 9, 5, ColorSpace::Rgb);
        assert_eq!(
            compress_roundtrip(&img, &CompressOp::Identity).unwrap(),
            img
        );

        let v = Image::new(1, 1, ColorSpace::Gray, vec![0.26]).unwrap();
        let q = compress_roundtrip(&v, &CompressOp::UniformQuant { step: 0.1 }).unwrap();
        assert!((q.data()[0] - 0.3).abs() < 1e-6);

        let op = CompressOp::UniformQuant { step: 0.07 };
        let once = compress_roundtrip(&img, &op).unwrap();
        let twice = compress_roundtrip(&once, &op).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn config_errors() {
        let img = Image::filled(8, 8, ColorSpace::Gray, 0.5).unwrap();
        for op in [
            CompressOp::UniformQuant { step: 0.0 },
            CompressOp::UniformQuant { step: -1.0 },
            CompressOp::DctQuant {
                quality: 0,
                chroma_subsample: false,
            },
            CompressOp::DctQuant {
                quality: 101,
                chroma_subsample: true,
            },
        ] {
            assert!(matches!(
                compress_roundtrip(&img, &op),
                Err(Error::Config(_))
            ));
        }
        let ycc = Image::filled(8, 8, ColorSpace::YCbCr, 0.5).unwrap();
        assert!(compress_roundtrip(&ycc, &CompressOp::jpeg(50)).is_err());
    }

    #[test]
    fn dct_preserves_shape_for_odd_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (w, h) in [(1, 1), (7, 13), (17, 9), (16, 16)] {
            let img = random_image(&mut rng, w, h, ColorSpace::Rgb);
            let out = compress_roundtrip(&img, &CompressOp::jpeg(10)).unwrap();
            assert!(out.same_shape(&img));
            assert!(out.all_finite());
        }
    }

    #[test]
    fn q100_within_parseval_bound_on_gray() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = CompressOp::DctQuant {
            quality: 100,
            chroma_subsample: false,
        };
        for _ in 0..5 {
            let img = random_image(&mut rng, 16, 16, ColorSpace::Gray);
            let out = compress_roundtrip(&img, &op).unwrap();
            // Per-block RMS, checked block by block.
            for by in 0..2 {
                for bx in 0..2 {
                    let mut se = 0.0f64;
                    for y in 0..8 {
                        for x in 0..8 {
                            let d = f64::from(out.get(0, bx * 8 + x, by * 8 + y))
                                - f64::from(img.get(0, bx * 8 + x, by * 8 + y));
                            se += d * d;
                        }
                    }
                    assert!((se / 64.0).sqrt() <= 0.5 / 255.0);
                }
            }
        }
    }

    #[test]
    fn dc_block_survives_exactly_when_on_grid() {
        // A constant block whose DC coefficient is a multiple of Q' passes through.
        // DC = 8 * (v * 255 - 128); with v * 255 - 128 = 2 -> DC = 16 = Q'[0] at q=50.
        let v = 130.0 / 255.0;
        let img = Image::filled(8, 8, ColorSpace::Gray, v).unwrap();
        let out = compress_roundtrip(
            &img,
            &CompressOp::DctQuant {
                quality: 50,
                chroma_subsample: false,
            },
        )
        .unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-6);
    }
}
