//! Closed-loop negative-feedback refinement for compressed-image
//! super-resolution.
//!
//! A known degradation chain (down-sampling, lossy compression) and a
//! pluggable super-resolution operator form the open-loop restorer
//! `x_s0 = SR(CP(DS(x_h0)))`. [`feedback::circular_refine`] then closes the
//! loop around the same chain, iterating
//! `x_h <- x_h + lambda * (x_s0 - SR(CP(DS(x_h))))`.

pub mod backend;
pub mod compress;
pub mod error;
pub mod feedback;
pub mod image;
pub mod metrics;
pub mod operators;
pub mod ppm;
mod resample;

pub use compress::compress_roundtrip;
pub use error::{Error, Result};
pub use feedback::{
    circular_refine, circular_refine_with_reference, residual, run_from_compressed,
    serial_pipeline, InitMode, LoopConfig, LoopTrace, SerialResult,
};
pub use image::{
    abs_diff, crop_to_multiple, rgb_to_ycbcr, ycbcr_to_rgb, ColorSpace, DiffMap, Image,
};
pub use metrics::{psnr, ssim, upsample_for_metric, MetricMode, MetricOptions, SsimParams};
pub use operators::{
    degrade, downsample, super_resolve, CompressOp, DownsampleKind, DownsampleOp, OperatorChain,
    SrKind, SrOp,
};
pub use ppm::{load_ppm, save_ppm};
