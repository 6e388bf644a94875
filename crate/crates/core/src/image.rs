//! Planar floating-point image value type.
//!
//! Samples are stored channel-major, then row-major: sample `(c, y, x)` lives
//! at `c * width * height + y * width + x`. The nominal range is `[0, 1]` but
//! values outside it are allowed, since the refinement loop runs unclamped.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::YCbCr => "YCbCr",
            ColorSpace::Gray => "Gray",
        })
    }
}

#[derive(Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    color_space: ColorSpace,
    data: Vec<f32>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("color_space", &self.color_space)
            .finish_non_exhaustive()
    }
}

impl Image {
    /// Builds an image from planar samples, validating length and finiteness.
    pub fn new(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width * height * color_space.channels();
        if data.len() != expected {
            return Err(Error::contract(format!(
                "data length {} does not match {width}x{height}x{}",
                data.len(),
                color_space.channels()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite sample at index {i}")));
        }
        Ok(Image {
            width,
            height,
            color_space,
            data,
        })
    }

    /// Internal constructor for operations whose output is finite by construction.
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        data: Vec<f32>,
    ) -> Self {
        debug_assert!(width > 0 && height > 0);
        debug_assert_eq!(data.len(), width * height * color_space.channels());
        Image {
            width,
            height,
            color_space,
            data,
        }
    }

    pub fn filled(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        value: f32,
    ) -> Result<Self> {
        Image::new(
            width,
            height,
            color_space,
            vec![value; width * height * color_space.channels()],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.color_space.channels()
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.plane_len() + y * self.width + x]
    }

    /// Same dimensions and color space.
    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.color_space == other.color_space
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{what}: shape mismatch {}x{} {} vs {}x{} {}",
                self.width,
                self.height,
                self.color_space,
                other.width,
                other.height,
                other.color_space
            )))
        }
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Image::from_parts(self.width, self.height, self.color_space, data)
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Per-sample `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.ensure_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Image::from_parts(
            self.width,
            self.height,
            self.color_space,
            data,
        ))
    }

    /// `self += scale * other`, in place.
    pub fn add_scaled(&mut self, other: &Image, scale: f32) -> Result<()> {
        self.ensure_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Euclidean norm over every sample, accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f32> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Top-left sub-image of the given size.
    pub fn crop(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::contract(format!(
                "crop {width}x{height} out of bounds for {}x{}",
                self.width, self.height
            )));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(width * height * self.channels());
        for plane in self.planes() {
            for row in plane.chunks_exact(self.width).take(height) {
                data.extend_from_slice(&row[..width]);
            }
        }
        Ok(Image::from_parts(width, height, self.color_space, data))
    }

    /// Removes `border` pixels from every edge.
    pub fn shave(&self, border: usize) -> Result<Image> {
        if border == 0 {
            return Ok(self.clone());
        }
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::contract(format!(
                "cannot shave {border} px from a {}x{} image",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width - 2 * border, self.height - 2 * border);
        let mut data = Vec::with_capacity(w * h * self.channels());
        for plane in self.planes() {
            for row in plane.chunks_exact(self.width).skip(border).take(h) {
                data.extend_from_slice(&row[border..border + w]);
            }
        }
        Ok(Image::from_parts(w, h, self.color_space, data))
    }
}

/// Top-left crop to the largest size divisible by `m` in both axes.
pub fn crop_to_multiple(img: &Image, m: usize) -> Result<Image> {
    if m == 0 {
        return Err(Error::config("crop factor must be at least 1"));
    }
    let (w, h) = ((img.width / m) * m, (img.height / m) * m);
    if w == 0 || h == 0 {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            factor: m,
        });
    }
    img.crop(w, h)
}

// Full-range BT.601, as used by JFIF.
const KR: f32 = 0.299;
const KG: f32 = 0.587;
const KB: f32 = 0.114;
const CB_SCALE: f32 = 1.772;
const CR_SCALE: f32 = 1.402;

pub(crate) fn luma(r: f32, g: f32, b: f32) -> f32 {
    KR * r + KG * g + KB * b
}

pub fn rgb_to_ycbcr(img: &Image) -> Result<Image> {
    if img.color_space != ColorSpace::Rgb {
        return Err(Error::contract(format!(
            "rgb_to_ycbcr expects RGB input, got {}",
            img.color_space
        )));
    }
    let n = img.plane_len();
    let mut data = vec![0.0f32; 3 * n];
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let (yp, rest) = data.split_at_mut(n);
    let (cbp, crp) = rest.split_at_mut(n);
    for i in 0..n {
        let y = luma(r[i], g[i], b[i]);
        yp[i] = y;
        cbp[i] = (b[i] - y) / CB_SCALE + 0.5;
        crp[i] = (r[i] - y) / CR_SCALE + 0.5;
    }
    Ok(Image::from_parts(
        img.width,
        img.height,
        ColorSpace::YCbCr,
        data,
    ))
}

pub fn ycbcr_to_rgb(img: &Image) -> Result<Image> {
    if img.color_space != ColorSpace::YCbCr {
        return Err(Error::contract(format!(
            "ycbcr_to_rgb expects YCbCr input, got {}",
            img.color_space
        )));
    }
    let n = img.plane_len();
    let mut data = vec![0.0f32; 3 * n];
    let (yp, cbp, crp) = (img.plane(0), img.plane(1), img.plane(2));
    let (rp, rest) = data.split_at_mut(n);
    let (gp, bp) = rest.split_at_mut(n);
    for i in 0..n {
        let y = yp[i];
        let r = y + CR_SCALE * (crp[i] - 0.5);
        let b = y + CB_SCALE * (cbp[i] - 0.5);
        rp[i] = r;
        bp[i] = b;
        gp[i] = (y - KR * r - KB * b) / KG;
    }
    Ok(Image::from_parts(
        img.width,
        img.height,
        ColorSpace::Rgb,
        data,
    ))
}

/// Per-pixel absolute difference between two images.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub image: Image,
    pub left_id: String,
    pub right_id: String,
}

impl DiffMap {
    pub fn is_zero(&self) -> bool {
        self.image.data.iter().all(|&v| v == 0.0)
    }

    /// Multiplies every sample by `gain` and clamps to `[0, 1]`.
    pub fn amplified(&self, gain: f32) -> Image {
        self.image.map(|v| (v * gain).clamp(0.0, 1.0))
    }
}

pub fn abs_diff(a: &Image, b: &Image) -> Result<DiffMap> {
    abs_diff_named(a, b, "a", "b")
}

pub fn abs_diff_named(a: &Image, b: &Image, left_id: &str, right_id: &str) -> Result<DiffMap> {
    a.ensure_same_shape(b, "abs_diff")?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .collect();
    // YCbCr differences are not meaningful as a picture; callers convert first.
    let color_space = match a.color_space {
        ColorSpace::Gray => ColorSpace::Gray,
        _ => ColorSpace::Rgb,
    };
    Ok(DiffMap {
        image: Image::from_parts(a.width, a.height, color_space, data),
        left_id: left_id.to_owned(),
        right_id: right_id.to_owned(),
    })
}
