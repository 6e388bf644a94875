//! Separable integer-factor resampling.
//!
//! Pixel centers are aligned: output index `i` maps to source coordinate
//! `(i + 0.5) / f - 0.5` when enlarging and `(i + 0.5) * f - 0.5` when
//! reducing. Borders are edge-clamped.

use crate::image::Image;

/// Catmull-Rom cubic (Keys kernel with a = -0.5).
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

pub fn triangle(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.0 - x
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Triangle,
    CatmullRom,
}

impl Filter {
    fn radius(self) -> f64 {
        match self {
            Filter::Triangle => 1.0,
            Filter::CatmullRom => 2.0,
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Filter::Triangle => triangle(x),
            Filter::CatmullRom => catmull_rom(x),
        }
    }
}

/// Taps for one output sample along one axis.
#[derive(Debug, Clone)]
struct Taps {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

fn clamp_index(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}

/// Builds normalized taps mapping `src_len` samples to `dst_len`.
///
/// `scale` is dst/src. When reducing, the kernel is stretched by the inverse
/// scale so that it also acts as the antialiasing filter.
fn build_taps(filter: Filter, src_len: usize, dst_len: usize) -> Vec<Taps> {
    let scale = dst_len as f64 / src_len as f64;
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = filter.radius() * stretch;
    (0..dst_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let first = (center - support).floor() as i64 + 1;
            let last = (center + support).ceil() as i64 - 1;
            let mut indices = Vec::with_capacity((last - first + 1) as usize);
            let mut weights = Vec::with_capacity(indices.capacity());
            for j in first..=last {
                let w = filter.eval((j as f64 - center) / stretch);
                if w != 0.0 {
                    indices.push(clamp_index(j, src_len));
                    weights.push(w);
                }
            }
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            Taps { indices, weights }
        })
        .collect()
}

fn resample_plane(
    plane: &[f32],
    (w, h): (usize, usize),
    (dw, dh): (usize, usize),
    filter: Filter,
    out: &mut Vec<f32>,
) {
    let x_taps = build_taps(filter, w, dw);
    let y_taps = build_taps(filter, h, dh);

    // Horizontal pass into an f64 intermediate of size dw x h.
    let mut tmp = vec![0.0f64; dw * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let dst = &mut tmp[y * dw..(y + 1) * dw];
        for (o, taps) in dst.iter_mut().zip(&x_taps) {
            *o = taps
                .indices
                .iter()
                .zip(&taps.weights)
                .map(|(&j, &wt)| f64::from(row[j]) * wt)
                .sum();
        }
    }
    for taps in &y_taps {
        for x in 0..dw {
            let v: f64 = taps
                .indices
                .iter()
                .zip(&taps.weights)
                .map(|(&j, &wt)| tmp[j * dw + x] * wt)
                .sum();
            out.push(v as f32);
        }
    }
}

/// Resamples every channel to `dw x dh` with a separable filter.
pub(crate) fn resample(img: &Image, dw: usize, dh: usize, filter: Filter) -> Image {
    let mut data = Vec::with_capacity(dw * dh * img.channels());
    for plane in img.planes() {
        resample_plane(
            plane,
            (img.width(), img.height()),
            (dw, dh),
            filter,
            &mut data,
        );
    }
    Image::from_parts(dw, dh, img.color_space(), data)
}

/// Picks the top-left sample of every `f x f` block.
pub(crate) fn decimate(img: &Image, f: usize) -> Image {
    let (w, h) = (img.width() / f, img.height() / f);
    let mut data = Vec::with_capacity(w * h * img.channels());
    for plane in img.planes() {
        for y in 0..h {
            let row = &plane[y * f * img.width()..];
            data.extend((0..w).map(|x| row[x * f]));
        }
    }
    Image::from_parts(w, h, img.color_space(), data)
}

/// Replicates each pixel into an `f x f` block.
pub(crate) fn replicate(img: &Image, f: usize) -> Image {
    let (w, h) = (img.width() * f, img.height() * f);
    let mut data = Vec::with_capacity(w * h * img.channels());
    for plane in img.planes() {
        for y in 0..h {
            let row = &plane[(y / f) * img.width()..];
            data.extend((0..w).map(|x| row[x / f]));
        }
    }
    Image::from_parts(w, h, img.color_space(), data)
}
