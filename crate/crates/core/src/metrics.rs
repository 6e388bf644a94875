//! PSNR and SSIM.

use crate::error::{Error, Result};
use crate::image::{luma, ColorSpace, Image};
use crate::resample::{resample, Filter};

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the inputs are equal.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.ensure_same_shape(b, "psnr")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Metric(format!("peak must be positive, got {peak}")));
    }
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub fn gaussian_1d(&self) -> Vec<f64> {
        let c = (self.window_size as f64 - 1.0) / 2.0;
        let g: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - c;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = g.iter().sum();
        g.into_iter().map(|v| v / sum).collect()
    }

    fn constants(&self) -> (f64, f64) {
        let l = self.dynamic_range;
        ((self.k1 * l).powi(2), (self.k2 * l).powi(2))
    }
}

/// Valid-region separable filtering of an f64 plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g
                .iter()
                .enumerate()
                .map(|(i, gv)| gv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

struct LocalStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

fn local_stats(a: &[f32], b: &[f32], w: usize, h: usize, g: &[f64]) -> LocalStats {
    let x: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(&x, w, h, g);
    let mu_y = filter_valid(&y, w, h, g);
    let ex2 = filter_valid(&xx, w, h, g);
    let ey2 = filter_valid(&yy, w, h, g);
    let exy = filter_valid(&xy, w, h, g);
    let var_x = ex2.iter().zip(&mu_x).map(|(e, m)| e - m * m).collect();
    let var_y = ey2.iter().zip(&mu_y).map(|(e, m)| e - m * m).collect();
    let cov = exy
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (mx, my))| e - mx * my)
        .collect();
    LocalStats {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

fn check_ssim_inputs(a: &Image, b: &Image, p: &SsimParams) -> Result<()> {
    a.ensure_same_shape(b, "ssim")?;
    if p.window_size == 0 || a.width() < p.window_size || a.height() < p.window_size {
        return Err(Error::Metric(format!(
            "image {}x{} is smaller than the {}-pixel SSIM window",
            a.width(),
            a.height(),
            p.window_size
        )));
    }
    Ok(())
}

/// Mean SSIM per channel, averaged over channels.
pub fn ssim(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    check_ssim_inputs(a, b, p)?;
    let g = p.gaussian_1d();
    let (c1, c2) = p.constants();
    let mut total = 0.0;
    for c in 0..a.channels() {
        let s = local_stats(a.plane(c), b.plane(c), a.width(), a.height(), &g);
        let n = s.mu_x.len();
        let sum: f64 = (0..n)
            .map(|i| {
                let (mx, my) = (s.mu_x[i], s.mu_y[i]);
                ((2.0 * mx * my + c1) * (2.0 * s.cov[i] + c2))
                    / ((mx * mx + my * my + c1) * (s.var_x[i] + s.var_y[i] + c2))
            })
            .sum();
        total += sum / n as f64;
    }
    Ok(total / a.channels() as f64)
}

/// The contrast-structure factor of SSIM, `(2 cov + C2) / (var_x + var_y + C2)`,
/// averaged like [`ssim`]. It ignores local means entirely.
pub fn ssim_contrast_structure(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    check_ssim_inputs(a, b, p)?;
    let g = p.gaussian_1d();
    let (_, c2) = p.constants();
    let mut total = 0.0;
    for c in 0..a.channels() {
        let s = local_stats(a.plane(c), b.plane(c), a.width(), a.height(), &g);
        let n = s.cov.len();
        let sum: f64 = (0..n)
            .map(|i| (2.0 * s.cov[i] + c2) / (s.var_x[i] + s.var_y[i] + c2))
            .sum();
        total += sum / n as f64;
    }
    Ok(total / a.channels() as f64)
}

/// Bicubic upsampling of a low-resolution image to the reference size, for
/// scoring the compressed observation itself.
pub fn upsample_for_metric(lowres: &Image, target_w: usize, target_h: usize) -> Result<Image> {
    let (w, h) = (lowres.width(), lowres.height());
    if !target_w.is_multiple_of(w) || !target_h.is_multiple_of(h) || target_w / w != target_h / h {
        return Err(Error::contract(format!(
            "target {target_w}x{target_h} is not an integer multiple of {w}x{h}"
        )));
    }
    if target_w == w {
        return Ok(lowres.clone());
    }
    Ok(resample(lowres, target_w, target_h, Filter::CatmullRom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricMode {
    /// All color channels.
    #[default]
    Rgb,
    /// Full-range luma only.
    Y,
}

/// How images are prepared before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricOptions {
    pub mode: MetricMode,
    /// Round both images to the 1/255 grid first.
    pub eight_bit: bool,
    /// Border pixels removed from every edge.
    pub shave: usize,
}

impl MetricOptions {
    /// Clamp, optionally reduce to luma, quantize, and shave.
    pub fn prepare(&self, img: &Image) -> Result<Image> {
        let mut out = img.clamped();
        if self.eight_bit {
            out = out.map(|v| (v * 255.0).round() / 255.0);
        }
        if self.mode == MetricMode::Y && out.color_space() != ColorSpace::Gray {
            if out.color_space() != ColorSpace::Rgb {
                return Err(Error::contract("luma mode needs RGB or Gray input"));
            }
            let y = (0..out.plane_len())
                .map(|i| luma(out.plane(0)[i], out.plane(1)[i], out.plane(2)[i]))
                .collect();
            out = Image::new(out.width(), out.height(), ColorSpace::Gray, y)?;
        }
        out.shave(self.shave)
    }

    /// `(psnr, ssim)` of `test` against `reference`.
    pub fn evaluate(&self, test: &Image, reference: &Image) -> Result<(f64, f64)> {
        let a = self.prepare(test)?;
        let b = self.prepare(reference)?;
        Ok((psnr(&a, &b, 1.0)?, ssim(&a, &b, &SsimParams::default())?))
    }
}
