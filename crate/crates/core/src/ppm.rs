//! Binary Netpbm I/O (P5 grayscale, P6 RGB) at 8 bits per sample.

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        match text.parse::<usize>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err(format!("{what} out of range"))
            }
        }
    }
}

/// Decodes a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn load_ppm(bytes: &[u8]) -> Result<Image> {
    let mut r = HeaderReader { bytes, pos: 0 };
    let color_space = match bytes.get(..2) {
        Some(b"P5") => ColorSpace::Gray,
        Some(b"P6") => ColorSpace::Rgb,
        _ => return r.err("bad magic, expected P5 or P6"),
    };
    r.pos = 2;
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval_pos = r.pos;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        r.pos = maxval_pos;
        r.skip_separators();
        return r.err(format!("unsupported maxval {maxval}, expected 255"));
    }
    if width == 0 || height == 0 {
        return r.err("zero image dimension");
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => return r.err("expected whitespace after maxval"),
    }
    let channels = color_space.channels();
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels));
    let Some(count) = count else {
        return r.err("image dimensions overflow");
    };
    let payload = &bytes[r.pos..];
    if payload.len() < count {
        r.pos = bytes.len();
        return r.err(format!(
            "truncated payload: expected {count} bytes, found {}",
            payload.len()
        ));
    }

    let plane = width * height;
    let mut data = vec![0.0f32; count];
    for (i, px) in payload[..count].chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = f32::from(v) / 255.0;
        }
    }
    Ok(Image::from_parts(width, height, color_space, data))
}

fn quantize(v: f32) -> u8 {
    // f32::round is half-away-from-zero.
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an RGB or Gray image as P6/P5 with a minimal header.
pub fn save_ppm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.color_space() {
        ColorSpace::Rgb => "P6",
        ColorSpace::Gray => "P5",
        ColorSpace::YCbCr => {
            return Err(Error::contract(
                "save_ppm needs RGB or Gray input; convert YCbCr first",
            ))
        }
    };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let channels = img.channels();
    let plane = img.plane_len();
    let mut out = Vec::with_capacity(header.len() + plane * channels);
    out.extend_from_slice(header.as_bytes());
    let data = img.data();
    for i in 0..plane {
        for c in 0..channels {
            out.push(quantize(data[c * plane + i]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p5_endpoints() {
        let mut bytes = b"P5 2 1 255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!(img.color_space(), ColorSpace::Gray);
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn p6_constant() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[128; 12]);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!(img.color_space(), ColorSpace::Rgb);
        for v in img.data() {
            assert!((v - 0.50196).abs() < 1e-5);
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let mut bytes = b"P5\n# a comment\n  2\t# another\n1\r\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20]);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(save_ppm(&img).unwrap()[11..], [10, 20]);
    }

    #[test]
    fn parse_errors_report_offsets() {
        match load_ppm(b"P3 1 1 255\n0 0 0") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        match load_ppm(b"P5 1 1 65535\n\0\0") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 7);
                assert!(message.contains("maxval"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match load_ppm(b"P6 2 2 255\n\x01\x02") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 13);
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_ppm(b"P5 x 1 255\n").is_err());
        assert!(load_ppm(b"").is_err());
    }

    #[test]
    fn save_gray_header_and_quantization() {
        let img = Image::new(1, 1, ColorSpace::Gray, vec![1.0]).unwrap();
        assert_eq!(save_ppm(&img).unwrap(), b"P5\n1 1\n255\n\xff");
        let img = Image::new(3, 1, ColorSpace::Gray, vec![128.0 / 255.0, 1.2, -0.3]).unwrap();
        assert_eq!(&save_ppm(&img).unwrap()[11..], &[128, 255, 0]);
    }

    #[test]
    fn save_rejects_ycbcr() {
        let img = Image::filled(1, 1, ColorSpace::YCbCr, 0.5).unwrap();
        assert!(matches!(save_ppm(&img), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn p6_bytes_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let mut state = seed;
            let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
            for _ in 0..w * h * 3 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                bytes.push((state >> 56) as u8);
            }
            let img = load_ppm(&bytes).unwrap();
            prop_assert_eq!(save_ppm(&img).unwrap(), bytes.clone());
            prop_assert_eq!(load_ppm(&save_ppm(&img).unwrap()).unwrap(), img);
        }
    }
}
