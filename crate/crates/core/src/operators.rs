//! The DS, CP and SR units and their composition.

use std::fmt;

use crate::backend::{sr_via_backend, BackendHandle};
use crate::compress::compress_roundtrip;
pub use crate::compress::CompressOp;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::{decimate, replicate, resample, Filter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsampleKind {
    Nearest,
    Bicubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownsampleOp {
    pub kind: DownsampleKind,
    pub factor: usize,
}

impl DownsampleOp {
    pub fn new(kind: DownsampleKind, factor: usize) -> Self {
        DownsampleOp { kind, factor }
    }
}

#[derive(Clone)]
pub enum SrKind {
    Nearest,
    Bilinear,
    Bicubic,
    External(BackendHandle),
}

impl fmt::Debug for SrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SrKind::Nearest => "Nearest",
            SrKind::Bilinear => "Bilinear",
            SrKind::Bicubic => "Bicubic",
            SrKind::External(_) => "External",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SrOp {
    pub kind: SrKind,
    pub factor: usize,
}

impl SrOp {
    pub fn new(kind: SrKind, factor: usize) -> Self {
        SrOp { kind, factor }
    }
}

/// A bound (DS, CP, SR) triple realizing `SR(CP(DS(x)))`.
#[derive(Debug, Clone)]
pub struct OperatorChain {
    pub ds: DownsampleOp,
    pub cp: CompressOp,
    pub sr: SrOp,
}

impl OperatorChain {
    pub fn new(ds: DownsampleOp, cp: CompressOp, sr: SrOp) -> Result<Self> {
        let chain = OperatorChain { ds, cp, sr };
        chain.validate()?;
        Ok(chain)
    }

    /// Factor 1, identity compression, nearest resampling: the perfect plant.
    pub fn identity() -> Self {
        OperatorChain {
            ds: DownsampleOp::new(DownsampleKind::Nearest, 1),
            cp: CompressOp::Identity,
            sr: SrOp::new(SrKind::Nearest, 1),
        }
    }

    pub fn factor(&self) -> usize {
        self.ds.factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.ds.factor == 0 || self.sr.factor == 0 {
            return Err(Error::config("scale factors must be at least 1"));
        }
        if self.ds.factor != self.sr.factor {
            return Err(Error::config(format!(
                "downsample factor {} differs from super-resolution factor {}",
                self.ds.factor, self.sr.factor
            )));
        }
        if matches!(self.sr.kind, SrKind::External(_)) && self.sr.factor > usize::from(u8::MAX) {
            return Err(Error::config("external backends take scales up to 255"));
        }
        self.cp.validate()
    }

    /// `SR(CP(DS(x)))`.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        super_resolve(&degrade(img, self)?, &self.sr)
    }
}

pub fn downsample(img: &Image, op: &DownsampleOp) -> Result<Image> {
    let f = op.factor;
    if f == 0 {
        return Err(Error::config("downsample factor must be at least 1"));
    }
    if !img.width().is_multiple_of(f) || !img.height().is_multiple_of(f) {
        return Err(Error::contract(format!(
            "{}x{} is not divisible by downsample factor {f}",
            img.width(),
            img.height()
        )));
    }
    if f == 1 {
        return Ok(img.clone());
    }
    Ok(match op.kind {
        DownsampleKind::Nearest => decimate(img, f),
        DownsampleKind::Bicubic => {
            resample(img, img.width() / f, img.height() / f, Filter::CatmullRom)
        }
    })
}

pub fn super_resolve(img: &Image, op: &SrOp) -> Result<Image> {
    let f = op.factor;
    if f == 0 {
        return Err(Error::config("super-resolution factor must be at least 1"));
    }
    if let SrKind::External(handle) = &op.kind {
        let scale = u8::try_from(f)
            .map_err(|_| Error::config("external backends take scales up to 255"))?;
        return Ok(sr_via_backend(img, scale, handle)?);
    }
    if f == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width() * f, img.height() * f);
    Ok(match op.kind {
        SrKind::Nearest => replicate(img, f),
        SrKind::Bilinear => resample(img, w, h, Filter::Triangle),
        SrKind::Bicubic => resample(img, w, h, Filter::CatmullRom),
        SrKind::External(_) => unreachable!(),
    })
}

/// `CP(DS(x))`: the low-resolution compressed observation.
pub fn degrade(img: &Image, chain: &OperatorChain) -> Result<Image> {
    compress_roundtrip(&downsample(img, &chain.ds)?, &chain.cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize, cs: ColorSpace) -> Image {
        let data = (0..w * h * cs.channels())
            .map(|_| rng.random::<f32>())
            .collect();
        Image::new(w, h, cs, data).unwrap()
    }

    const SR_KINDS: [fn() -> SrKind; 3] =
        [|| SrKind::Nearest, || SrKind::Bilinear, || SrKind::Bicubic];

    #[test]
    fn nearest_downsample_takes_top_left() {
        let img = Image::new(2, 2, ColorSpace::Gray, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let out = downsample(&img, &DownsampleOp::new(DownsampleKind::Nearest, 2)).unwrap();
        assert_eq!(out.data(), &[0.1]);
    }

    #[test]
    fn factor_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random(&mut rng, 7, 5, ColorSpace::Rgb);
        for kind in [DownsampleKind::Nearest, DownsampleKind::Bicubic] {
            assert_eq!(downsample(&img, &DownsampleOp::new(kind, 1)).unwrap(), img);
        }
        for kind in SR_KINDS {
            assert_eq!(super_resolve(&img, &SrOp::new(kind(), 1)).unwrap(), img);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let img = Image::filled(16, 12, ColorSpace::Rgb, 0.37).unwrap();
        for kind in [DownsampleKind::Nearest, DownsampleKind::Bicubic] {
            for f in [2, 4] {
                let out = downsample(&img, &DownsampleOp::new(kind, f)).unwrap();
                assert_eq!((out.width(), out.height()), (16 / f, 12 / f));
                assert!(out.data().iter().all(|v| (v - 0.37).abs() <= 1e-6));
            }
        }
        for kind in SR_KINDS {
            let out = super_resolve(&img, &SrOp::new(kind(), 3)).unwrap();
            assert_eq!((out.width(), out.height()), (48, 36));
            assert!(out.data().iter().all(|v| (v - 0.37).abs() <= 1e-6));
        }
    }

    #[test]
    fn nearest_sr_replicates() {
        let img = Image::new(1, 1, ColorSpace::Gray, vec![0.7]).unwrap();
        let out = super_resolve(&img, &SrOp::new(SrKind::Nearest, 2)).unwrap();
        assert_eq!(out.data(), &[0.7; 4]);
    }

    #[test]
    fn non_divisible_downsample_is_rejected() {
        let img = Image::filled(6, 4, ColorSpace::Gray, 0.0).unwrap();
        let err = downsample(&img, &DownsampleOp::new(DownsampleKind::Bicubic, 4)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn nearest_composite_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chain = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Nearest, 4),
            CompressOp::Identity,
            SrOp::new(SrKind::Nearest, 4),
        )
        .unwrap();
        for _ in 0..10 {
            let x = random(&mut rng, 16, 8, ColorSpace::Rgb);
            let once = chain.apply(&x).unwrap();
            assert_eq!(chain.apply(&once).unwrap(), once);
        }
    }

    #[test]
    fn degrade_composes() {
        let img = Image::new(
            8,
            8,
            ColorSpace::Gray,
            (0..64).map(|v| v as f32 / 64.0).collect(),
        )
        .unwrap();
        let chain = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Nearest, 4),
            CompressOp::Identity,
            SrOp::new(SrKind::Nearest, 4),
        )
        .unwrap();
        let low = degrade(&img, &chain).unwrap();
        assert_eq!(low.data(), &[0.0, 4.0 / 64.0, 32.0 / 64.0, 36.0 / 64.0]);

        let chain = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Bicubic, 2),
            CompressOp::jpeg(30),
            SrOp::new(SrKind::Bicubic, 2),
        )
        .unwrap();
        let separate =
            compress_roundtrip(&downsample(&img, &chain.ds).unwrap(), &chain.cp).unwrap();
        assert_eq!(degrade(&img, &chain).unwrap(), separate);
    }

    #[test]
    fn chain_rejects_mismatched_factors() {
        let err = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Nearest, 4),
            CompressOp::Identity,
            SrOp::new(SrKind::Bicubic, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bicubic_upsample_interpolates_linear_ramp() {
        // Catmull-Rom reproduces linear functions away from clamped borders.
        let w = 8;
        let img = Image::new(
            w,
            1,
            ColorSpace::Gray,
            (0..w).map(|x| x as f32 * 0.1).collect(),
        )
        .unwrap();
        let out = super_resolve(&img, &SrOp::new(SrKind::Bicubic, 2)).unwrap();
        for i in 4..(2 * w - 4) {
            let src = (i as f32 + 0.5) / 2.0 - 0.5;
            assert!((out.get(0, i, 0) - 0.1 * src).abs() < 1e-6, "i={i}");
        }
    }
}
