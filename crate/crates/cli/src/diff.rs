//! The `diff` subcommand: absolute-difference maps between two images.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cssr_core::image::abs_diff_named;
use cssr_core::{load_ppm, save_ppm, DiffMap, Image};

use crate::exit::{CliResult, Failure};

fn load(path: &Path) -> CliResult<Image> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)?;
    load_ppm(&bytes).map_err(|e| Failure::data(e).context(format!("loading {}", path.display())))
}

/// Sidecar path recording the gain: `out.pgm` becomes `out.gain.txt`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("gain.txt")
}

/// Writes `|a - b| * gain`, clamped to `[0, 1]`, plus the gain sidecar.
pub fn diff_images(a: &Path, b: &Path, out: &Path, gain: f32) -> CliResult<DiffMap> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Failure::config(anyhow::anyhow!(
            "gain must be a positive finite number, got {gain}"
        )));
    }
    let left = load(a)?;
    let right = load(b)?;
    let map = abs_diff_named(
        &left,
        &right,
        &a.display().to_string(),
        &b.display().to_string(),
    )
    .map_err(Failure::data)?;
    let bytes = save_ppm(&map.amplified(gain)).map_err(Failure::data)?;
    fs::write(out, bytes)
        .with_context(|| format!("writing {}", out.display()))
        .map_err(Failure::data)?;
    let sidecar = sidecar_path(out);
    fs::write(
        &sidecar,
        format!(
            "gain={gain}\nleft={}\nright={}\n",
            map.left_id, map.right_id
        ),
    )
    .with_context(|| format!("writing {}", sidecar.display()))
    .map_err(Failure::data)?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exit::ExitKind;
    use cssr_core::ColorSpace;

    fn write(dir: &Path, name: &str, img: &Image) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, save_ppm(img).unwrap()).unwrap();
        p
    }

    #[test]
    fn gain_on_a_constant_difference() {
        let dir = tempfile::tempdir().unwrap();
        // 0.2 and 0.25 sit on the 8-bit grid as 51/255 and 63.75 -> use exact codes.
        let a = write(
            dir.path(),
            "a.pgm",
            &Image::filled(4, 3, ColorSpace::Gray, 51.0 / 255.0).unwrap(),
        );
        let b = write(
            dir.path(),
            "b.pgm",
            &Image::filled(4, 3, ColorSpace::Gray, 38.0 / 255.0).unwrap(),
        );
        let out = dir.path().join("d.pgm");
        diff_images(&a, &b, &out, 10.0).unwrap();
        let d = load_ppm(&fs::read(&out).unwrap()).unwrap();
        assert!(d.data().iter().all(|&v| v == 130.0 / 255.0));
        let side = fs::read_to_string(sidecar_path(&out)).unwrap();
        assert!(side.starts_with("gain=10\n"));
    }

    #[test]
    fn shape_mismatch_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.pgm",
            &Image::filled(4, 3, ColorSpace::Gray, 0.5).unwrap(),
        );
        let b = write(
            dir.path(),
            "b.pgm",
            &Image::filled(3, 4, ColorSpace::Gray, 0.5).unwrap(),
        );
        let err = diff_images(&a, &b, &dir.path().join("d.pgm"), 1.0).unwrap_err();
        assert_eq!(err.kind, ExitKind::Data);
        assert_eq!(err.code(), 2);
    }
}
