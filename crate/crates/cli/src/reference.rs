//! In-process operators exposed over the backend protocol by `cssr-backend`.

use std::fmt;
use std::str::FromStr;

use cssr_core::backend::SrPayload;
use cssr_core::{super_resolve, ColorSpace, SrKind, SrOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Returns the input unchanged; scale 1 only.
    Echo,
    Nearest,
    Bilinear,
    Bicubic,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "echo" => Ok(Mode::Echo),
            "nearest" => Ok(Mode::Nearest),
            "bilinear" => Ok(Mode::Bilinear),
            "bicubic" => Ok(Mode::Bicubic),
            other => Err(format!(
                "unknown mode `{other}` (echo, nearest, bilinear, bicubic)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Echo => "echo",
            Mode::Nearest => "nearest",
            Mode::Bilinear => "bilinear",
            Mode::Bicubic => "bicubic",
        })
    }
}

impl Mode {
    pub fn default_scales(self) -> Vec<u8> {
        match self {
            Mode::Echo => vec![1],
            _ => vec![2, 4],
        }
    }

    /// Answers one request. Channels are treated independently, so the
    /// three-channel color tag is irrelevant here.
    pub fn handle(self, req: &SrPayload) -> Result<SrPayload, String> {
        let kind = match self {
            Mode::Echo if req.scale == 1 => return Ok(req.clone()),
            Mode::Echo => return Err(format!("echo mode cannot upscale by {}", req.scale)),
            Mode::Nearest => SrKind::Nearest,
            Mode::Bilinear => SrKind::Bilinear,
            Mode::Bicubic => SrKind::Bicubic,
        };
        let img = req
            .clone()
            .into_image(ColorSpace::Rgb)
            .map_err(|e| e.to_string())?;
        let out = super_resolve(&img, &SrOp::new(kind, usize::from(req.scale)))
            .map_err(|e| e.to_string())?;
        SrPayload::from_image(&out, req.scale).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cssr_core::Image;

    #[test]
    fn bicubic_mode_matches_in_process_operator() {
        let data = (0..3 * 5 * 4).map(|i| (i % 7) as f32 / 6.0).collect();
        let img = Image::new(5, 4, ColorSpace::Rgb, data).unwrap();
        let req = SrPayload::from_image(&img, 4).unwrap();
        let resp = Mode::Bicubic.handle(&req).unwrap();
        let expected = super_resolve(&img, &SrOp::new(SrKind::Bicubic, 4)).unwrap();
        assert_eq!((resp.width, resp.height, resp.channels), (20, 16, 3));
        assert_eq!(resp.data, expected.data());
    }

    #[test]
    fn echo_refuses_to_upscale() {
        let img = Image::filled(2, 2, ColorSpace::Gray, 0.5).unwrap();
        assert_eq!(
            Mode::Echo
                .handle(&SrPayload::from_image(&img, 1).unwrap())
                .unwrap()
                .data,
            img.data()
        );
        assert!(Mode::Echo
            .handle(&SrPayload::from_image(&img, 2).unwrap())
            .is_err());
    }
}
