//! Semantic fusion and uncertainty rendering on top of pre-trained 3D Gaussian
//! splat scenes.
//!
//! Per-pixel segmentation labels are fused into a Dirichlet belief per
//! gaussian, using each gaussian's alpha-compositing weight as the inference
//! kernel. The same weights rasterize the belief back into per-pixel
//! expectation and variance maps, from which pixel- and image-level
//! uncertainty are derived.
//!
//! Module map:
//! - [`scene_io`]: splat PLY, cameras JSON, label PNGs, state files, PFM/PNG output.
//! - [`splat_raster`]: projection, kernel, compositing weights, tiled rasterizer.
//! - [`semantic_fusion`]: Dirichlet state and the concentration update.
//! - [`prob_render`]: expectation/variance rasterization and image-level uncertainty.
//! - [`evaluation`]: confusion matrices, mIoU, PSNR, sparsification curves.
//! - [`synthetic_oracle`]: synthetic scenes and brute-force reference implementations.
//! - [`cli`]: the `splatsem` command-line front end.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod prob_render;
pub mod scene_io;
pub mod semantic_fusion;
pub mod splat_raster;
pub mod synthetic_oracle;

pub use error::{Error, Result};
