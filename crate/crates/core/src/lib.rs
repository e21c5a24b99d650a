//! Certification of pixel-wise classifiers under randomized smoothing.
//!
//! The engine draws Gaussian-noised copies of an image, optionally passes
//! them through a diffusion-style denoiser, runs a segmentation model on
//! each copy and turns the per-pixel vote counts into certified labels:
//!
//! - [`stats`]: Gaussian quantiles, exact binomial tails, Clopper-Pearson
//!   bounds and the Holm step-down correction.
//! - [`diffusion`]: linear noise schedules, the sigma-to-timestep solver and
//!   single/multi-step denoiser drivers, plus an analytic posterior-mean
//!   denoiser.
//! - [`models`]: the [`SegmentationModel`](models::SegmentationModel) trait
//!   and toy models with known statistics.
//! - [`smoothing`]: Monte Carlo sampling and the segmentation certifier with
//!   Holm-controlled abstention, plus a per-pixel Cohen-style reference.
//! - [`data`]: synthetic scenes, PNM I/O, resizing and label rendering.
//! - [`metrics`]: accuracy / IoU evaluation with abstentions.
//! - [`verification`]: brute-force oracles and the family-wise error
//!   simulation harness.
//!
//! # Example
//!
//! ```
//! use segcert::image::Image;
//! use segcert::models::ConstantModel;
//! use segcert::smoothing::{Engine, SmoothingConfig};
//!
//! let model = ConstantModel::new(3, 5).unwrap();
//! let image = Image::filled(8, 8, 1, 0.5);
//! let config = SmoothingConfig::new(0.25, 10, 100, 0.001, 0.75).unwrap();
//! let result = Engine::new(&model).seg_certify(&image, &config).unwrap();
//! assert!(result.labels.iter().all(|l| *l == Some(3)));
//! assert!((result.radius - 0.1686).abs() < 1e-3);
//! ```

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod smoothing;
pub mod stats;
pub mod verification;

pub use error::{Error, Result};
pub use image::{ClassId, Image, LabelMap};
