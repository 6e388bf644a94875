//! Open-loop restoration and closed-loop negative-feedback refinement.
//!
//! The serial pipeline produces the set-point `x_s0 = SR(CP(DS(x_h0)))`. The
//! circular refinement then drives an estimate `x_h` so that its own
//! re-degraded reconstruction matches that set-point:
//!
//! ```text
//! x_e = x_s0 - SR(CP(DS(x_h)))      error vector
//! x_h <- x_h + lambda * x_e         control step
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::psnr;
use crate::operators::{degrade, super_resolve, OperatorChain};

/// Starting value of `x_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Start from the set-point itself.
    FromSerial,
    Zero,
    /// Uniform `[0, 1)` samples from a seeded ChaCha8 generator.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub lambda: f32,
    pub iterations: usize,
    pub init: InitMode,
    pub clamp_each_iter: bool,
    /// Stop once the residual L2 norm drops to this value or below.
    pub early_stop_tol: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            lambda: 0.1,
            iterations: 10,
            init: InitMode::FromSerial,
            clamp_each_iter: false,
            early_stop_tol: None,
        }
    }
}

impl LoopConfig {
    pub fn with_lambda(lambda: f32, iterations: usize) -> Self {
        LoopConfig {
            lambda,
            iterations,
            ..LoopConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Error::config(format!(
                    "early-stop tolerance must be a finite value >= 0, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialResult {
    /// `DS(x_h0)`.
    pub x_d0: Image,
    /// `CP(x_d0)`, the compressed observation.
    pub x_c0: Image,
    /// `SR(x_c0)`, the open-loop reconstruction and feedback set-point.
    pub x_s0: Image,
}

/// Per-iteration diagnostics.
///
/// `residual_l2[k]` is the error norm of the estimate after `k + 1` control
/// steps; the norm before the first step is `initial_residual_l2`.
/// `control_l2[k]` is the norm of the correction applied in step `k + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopTrace {
    pub initial_residual_l2: f64,
    pub residual_l2: Vec<f64>,
    pub control_l2: Vec<f64>,
    pub psnr_vs_reference: Option<Vec<f64>>,
    pub iterations_run: usize,
}

impl LoopTrace {
    pub fn final_residual_l2(&self) -> f64 {
        self.residual_l2
            .last()
            .copied()
            .unwrap_or(self.initial_residual_l2)
    }

    /// `residual[n] / residual[n - 1]` for every completed step.
    pub fn decay_ratios(&self) -> Vec<f64> {
        std::iter::once(self.initial_residual_l2)
            .chain(self.residual_l2.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Runs the open-loop pipeline and keeps every intermediate.
pub fn serial_pipeline(x_h0: &Image, chain: &OperatorChain) -> Result<SerialResult> {
    chain.validate()?;
    let x_d0 = crate::operators::downsample(x_h0, &chain.ds)?;
    let x_c0 = crate::compress::compress_roundtrip(&x_d0, &chain.cp)?;
    let x_s0 = super_resolve(&x_c0, &chain.sr)?;
    Ok(SerialResult { x_d0, x_c0, x_s0 })
}

/// The error vector `x_s0 - SR(CP(DS(x_h)))`.
pub fn residual(x_s0: &Image, x_h: &Image, chain: &OperatorChain) -> Result<Image> {
    x_s0.ensure_same_shape(x_h, "residual")?;
    let x_s = super_resolve(&degrade(x_h, chain)?, &chain.sr)?;
    x_s0.sub(&x_s)
}

fn initial_estimate(x_s0: &Image, init: InitMode) -> Image {
    match init {
        InitMode::FromSerial => x_s0.clone(),
        InitMode::Zero => x_s0.map(|_| 0.0),
        InitMode::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            x_s0.map(|_| rng.random::<f32>())
        }
    }
}

fn check_divisible(img: &Image, chain: &OperatorChain) -> Result<()> {
    let f = chain.factor();
    if f == 0 || !img.width().is_multiple_of(f) || !img.height().is_multiple_of(f) {
        return Err(Error::contract(format!(
            "{}x{} is not divisible by the chain factor {f}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Closed-loop refinement toward the set-point `x_s0`.
///
/// Returns the final estimate clamped to `[0, 1]` along with the trace.
pub fn circular_refine(
    x_s0: &Image,
    chain: &OperatorChain,
    cfg: &LoopConfig,
) -> Result<(Image, LoopTrace)> {
    circular_refine_with_reference(x_s0, chain, cfg, None)
}

/// Like [`circular_refine`], additionally tracking PSNR of the clamped
/// estimate against `reference` after every step.
pub fn circular_refine_with_reference(
    x_s0: &Image,
    chain: &OperatorChain,
    cfg: &LoopConfig,
    reference: Option<&Image>,
) -> Result<(Image, LoopTrace)> {
    cfg.validate()?;
    chain.validate()?;
    check_divisible(x_s0, chain)?;
    if let Some(r) = reference {
        x_s0.ensure_same_shape(r, "reference")?;
    }

    let at = |iteration: usize| {
        move |e: Error| Error::AtIteration {
            iteration,
            source: Box::new(e),
        }
    };

    let mut x_h = initial_estimate(x_s0, cfg.init);
    let mut x_e = residual(x_s0, &x_h, chain).map_err(at(0))?;
    let initial = x_e.l2_norm();
    let mut trace = LoopTrace {
        initial_residual_l2: initial,
        psnr_vs_reference: reference.map(|_| Vec::with_capacity(cfg.iterations)),
        ..LoopTrace::default()
    };

    let stop = |norm: f64| cfg.early_stop_tol.is_some_and(|tol| norm <= tol);
    if stop(initial) {
        return Ok((x_h.clamped(), trace));
    }

    for n in 1..=cfg.iterations {
        let control_norm = f64::from(cfg.lambda) * x_e.l2_norm();
        x_h.add_scaled(&x_e, cfg.lambda)?;
        if cfg.clamp_each_iter {
            x_h = x_h.clamped();
        }
        if !x_h.all_finite() {
            return Err(Error::Divergence {
                lambda: cfg.lambda,
                iteration: n,
                residual: f64::INFINITY,
                initial,
            });
        }
        x_e = residual(x_s0, &x_h, chain).map_err(at(n))?;
        let norm = x_e.l2_norm();

        trace.residual_l2.push(norm);
        trace.control_l2.push(control_norm);
        trace.iterations_run = n;
        if let (Some(psnrs), Some(r)) = (trace.psnr_vs_reference.as_mut(), reference) {
            psnrs.push(psnr(&x_h.clamped(), r, 1.0)?);
        }

        if norm > 10.0 * initial {
            return Err(Error::Divergence {
                lambda: cfg.lambda,
                iteration: n,
                residual: norm,
                initial,
            });
        }
        if stop(norm) {
            break;
        }
    }
    Ok((x_h.clamped(), trace))
}

/// Entry point from the compressed observation alone: upscale `x_c0` to get
/// the set-point, then refine.
pub fn run_from_compressed(
    x_c0: &Image,
    chain: &OperatorChain,
    cfg: &LoopConfig,
) -> Result<(Image, LoopTrace)> {
    chain.validate()?;
    let x_s0 = super_resolve(x_c0, &chain.sr)?;
    circular_refine(&x_s0, chain, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use crate::operators::{CompressOp, DownsampleKind, DownsampleOp, SrKind, SrOp};

    fn nearest_chain(f: usize) -> OperatorChain {
        OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Nearest, f),
            CompressOp::Identity,
            SrOp::new(SrKind::Nearest, f),
        )
        .unwrap()
    }

    fn ramp(w: usize, h: usize) -> Image {
        let n = w * h * 3;
        Image::new(
            w,
            h,
            ColorSpace::Rgb,
            (0..n).map(|i| (i % 97) as f32 / 97.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        for lambda in [0.0, -0.1, 1.5, f32::NAN] {
            assert!(LoopConfig::with_lambda(lambda, 3).validate().is_err());
        }
        assert!(LoopConfig::with_lambda(1.0, 0).validate().is_ok());
        let cfg = LoopConfig {
            early_stop_tol: Some(-1.0),
            ..LoopConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn serial_pipeline_by_hand() {
        let img = Image::new(2, 2, ColorSpace::Gray, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = serial_pipeline(&img, &nearest_chain(2)).unwrap();
        assert_eq!(s.x_d0.data(), &[0.1]);
        assert_eq!(s.x_c0.data(), &[0.1]);
        assert_eq!(s.x_s0.data(), &[0.1; 4]);
    }

    #[test]
    fn identity_chain_is_transparent() {
        let img = ramp(4, 4);
        let s = serial_pipeline(&img, &OperatorChain::identity()).unwrap();
        assert_eq!(s.x_s0, img);
        assert_eq!(s.x_c0, img);
        let e = residual(&s.x_s0, &img, &OperatorChain::identity()).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_iterations_return_init() {
        let s0 = ramp(8, 8).map(|v| v * 1.4 - 0.2);
        let cfg = LoopConfig::with_lambda(0.1, 0);
        let (out, trace) = circular_refine(&s0, &nearest_chain(4), &cfg).unwrap();
        assert_eq!(out, s0.clamped());
        assert_eq!(trace.iterations_run, 0);
        assert!(trace.residual_l2.is_empty());
    }

    #[test]
    fn one_step_matches_direct_computation() {
        let chain = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Bicubic, 2),
            CompressOp::jpeg(20),
            SrOp::new(SrKind::Bicubic, 2),
        )
        .unwrap();
        let x_h0 = ramp(16, 16);
        let s = serial_pipeline(&x_h0, &chain).unwrap();
        let cfg = LoopConfig {
            lambda: 0.3,
            iterations: 1,
            init: InitMode::Random(5),
            ..LoopConfig::default()
        };
        let (out, _) = circular_refine(&s.x_s0, &chain, &cfg).unwrap();
        let x0 = initial_estimate(&s.x_s0, cfg.init);
        let x_s = chain.apply(&x0).unwrap();
        for i in 0..x0.data().len() {
            let direct = (x0.data()[i] + 0.3 * (s.x_s0.data()[i] - x_s.data()[i])).clamp(0.0, 1.0);
            assert!((out.data()[i] - direct).abs() <= 1e-6);
        }
    }

    #[test]
    fn fixed_point_is_stable() {
        // FromSerial with an idempotent chain starts at zero residual.
        let chain = nearest_chain(2);
        let s = serial_pipeline(&ramp(8, 8), &chain).unwrap();
        let (out, trace) = circular_refine(&s.x_s0, &chain, &LoopConfig::default()).unwrap();
        assert_eq!(trace.initial_residual_l2, 0.0);
        assert!(trace.residual_l2.iter().all(|&r| r == 0.0));
        assert_eq!(out, s.x_s0.clamped());
    }

    #[test]
    fn early_stop_halts_loop() {
        let chain = nearest_chain(2);
        let s = serial_pipeline(&ramp(8, 8), &chain).unwrap();
        let cfg = LoopConfig {
            lambda: 1.0,
            iterations: 10,
            init: InitMode::Zero,
            early_stop_tol: Some(1e-9),
            ..LoopConfig::default()
        };
        let (_, trace) = circular_refine(&s.x_s0, &chain, &cfg).unwrap();
        assert_eq!(trace.iterations_run, 1);
    }

    #[test]
    fn reference_psnr_is_tracked() {
        let chain = nearest_chain(2);
        let x_h0 = ramp(8, 8);
        let s = serial_pipeline(&x_h0, &chain).unwrap();
        let cfg = LoopConfig {
            init: InitMode::Zero,
            iterations: 3,
            ..LoopConfig::default()
        };
        let (_, trace) =
            circular_refine_with_reference(&s.x_s0, &chain, &cfg, Some(&x_h0)).unwrap();
        let p = trace.psnr_vs_reference.unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn divisibility_is_enforced() {
        let s0 = Image::filled(6, 6, ColorSpace::Gray, 0.5).unwrap();
        assert!(matches!(
            circular_refine(&s0, &nearest_chain(4), &LoopConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn run_from_observation_matches_two_calls() {
        let chain = OperatorChain::new(
            DownsampleOp::new(DownsampleKind::Nearest, 2),
            CompressOp::jpeg(40),
            SrOp::new(SrKind::Bilinear, 2),
        )
        .unwrap();
        let s = serial_pipeline(&ramp(16, 8), &chain).unwrap();
        let cfg = LoopConfig::default();
        let (a, ta) = run_from_compressed(&s.x_c0, &chain, &cfg).unwrap();
        let (b, tb) = circular_refine(&s.x_s0, &chain, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (id, _) = run_from_compressed(&s.x_c0, &OperatorChain::identity(), &cfg).unwrap();
        assert_eq!(id, s.x_c0.clamped());
    }
}
