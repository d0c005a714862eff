//! Color style transfer with predicted 3D lookup tables.
//!
//! The pipeline predicts a pair of LUTs (content extraction, stylization)
//! from downsampled content/style references and applies them to images or
//! video of arbitrary resolution at constant cost per pixel.
//!
//! Module map:
//! - [`lut`]: dense 3D LUT representation, trilinear application, `.cube` I/O,
//!   compressed-basis materialization and composition
//! - [`nn`]: minimal dense tensor with reverse-mode differentiation, the
//!   layers the predictor needs, and an Adam optimizer
//! - [`encoder`]: shared multi-scale feature extractor
//! - [`irstyle`]: the three predictor architectures and the image-reference
//!   transfer pipeline
//! - [`training`]: paired/unpaired sample synthesis, losses, training loop
//! - [`prior`]: prior feature files, the feature mapper and style blending
//! - [`metrics`]: Style Gram loss and Content SSIM
//! - [`video`]: Lab-histogram scene segmentation and per-scene LUT reuse

pub mod encoder;
pub mod error;
pub mod image;
pub mod irstyle;
pub mod lut;
pub mod metrics;
pub mod nn;
pub mod prior;
pub mod training;
pub mod video;

pub use error::{Error, Result};
