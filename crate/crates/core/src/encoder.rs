//! Shared multi-scale feature extractor.
//!
//! Four blocks of (conv 3x3 stride 2, ReLU, conv 3x3 stride 1, ReLU) produce
//! a pyramid at strides 2/4/8/16 with 16/32/64/128 channels. The same
//! weights encode content and style thumbnails.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::nn::init;
use crate::nn::tensor::Tensor;
use crate::nn::Parameter;

/// Thumbnail edge length the predictors are trained at.
pub const THUMB_SIZE: usize = 256;
/// Channel counts per pyramid level.
pub const LEVEL_CHANNELS: [usize; 4] = [16, 32, 64, 128];

pub struct FeaturePyramid {
    /// Four feature maps [1, C_i, H/2^(i+1), W/2^(i+1)].
    pub levels: Vec<Tensor>,
}

struct Block {
    w1: Parameter,
    b1: Parameter,
    w2: Parameter,
    b2: Parameter,
}

pub struct Encoder {
    blocks: Vec<Block>,
}

impl Encoder {
    pub fn new(seed: u64) -> Encoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(4);
        let mut c_in = 3;
        for (i, &c_out) in LEVEL_CHANNELS.iter().enumerate() {
            let prefix = format!("encoder.block{i}");
            blocks.push(Block {
                w1: Parameter::new(
                    init::conv_weight(&mut rng, c_out, c_in, 3, 3),
                    format!("{prefix}.conv1.weight"),
                ),
                b1: Parameter::new(init::zeros_leaf(&[c_out]), format!("{prefix}.conv1.bias")),
                w2: Parameter::new(
                    init::conv_weight(&mut rng, c_out, c_out, 3, 3),
                    format!("{prefix}.conv2.weight"),
                ),
                b2: Parameter::new(init::zeros_leaf(&[c_out]), format!("{prefix}.conv2.bias")),
            });
            c_in = c_out;
        }
        Encoder { blocks }
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut out = Vec::with_capacity(16);
        for b in &self.blocks {
            out.push(b.w1.clone());
            out.push(b.b1.clone());
            out.push(b.w2.clone());
            out.push(b.b2.clone());
        }
        out
    }

    /// Forward pass on any [1, 3, H, W] input with H and W divisible by 16.
    pub fn forward(&self, x: &Tensor) -> FeaturePyramid {
        let mut levels = Vec::with_capacity(4);
        let mut cur = x.clone();
        for b in &self.blocks {
            let y = cur.conv2d(&b.w1.tensor, &b.b1.tensor, 2, 1).relu();
            let y = y.conv2d(&b.w2.tensor, &b.b2.tensor, 1, 1).relu();
            levels.push(y.clone());
            cur = y;
        }
        FeaturePyramid { levels }
    }

    /// Forward pass with detached weights: gradients flow to the input but
    /// never into the encoder. Used for perceptual losses, where the
    /// encoder serves as a fixed measuring stick.
    pub fn forward_frozen(&self, x: &Tensor) -> FeaturePyramid {
        let mut levels = Vec::with_capacity(4);
        let mut cur = x.clone();
        for b in &self.blocks {
            let y = cur
                .conv2d(&b.w1.tensor.detach(), &b.b1.tensor.detach(), 2, 1)
                .relu();
            let y = y
                .conv2d(&b.w2.tensor.detach(), &b.b2.tensor.detach(), 1, 1)
                .relu();
            levels.push(y.clone());
            cur = y;
        }
        FeaturePyramid { levels }
    }

    /// Forward pass restricted to the 256x256 thumbnail contract.
    pub fn encode(&self, thumb: &Tensor) -> Result<FeaturePyramid> {
        let shape = thumb.shape();
        if shape != [1, 3, THUMB_SIZE, THUMB_SIZE] {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects [1, 3, {THUMB_SIZE}, {THUMB_SIZE}], got {shape:?}"
            )));
        }
        Ok(self.forward(thumb))
    }
}

/// Interleaved RGB image -> planar [1, 3, H, W] tensor.
pub fn image_to_tensor(img: &ImageF) -> Tensor {
    let (w, h) = (img.width, img.height);
    let npix = w * h;
    let mut data = vec![0.0f64; 3 * npix];
    for p in 0..npix {
        data[p] = img.data[3 * p] as f64;
        data[npix + p] = img.data[3 * p + 1] as f64;
        data[2 * npix + p] = img.data[3 * p + 2] as f64;
    }
    Tensor::from_vec(data, &[1, 3, h, w])
}

/// Planar [1, 3, H, W] or [3, H, W] tensor -> interleaved RGB image.
pub fn tensor_to_image(t: &Tensor) -> ImageF {
    let shape = t.shape();
    let (h, w) = match shape.as_slice() {
        [1, 3, h, w] | [3, h, w] => (*h, *w),
        _ => panic!("expected [1, 3, H, W] or [3, H, W], got {shape:?}"),
    };
    let npix = w * h;
    let data = t.data();
    let mut out = vec![0.0f32; 3 * npix];
    for p in 0..npix {
        out[3 * p] = data[p] as f32;
        out[3 * p + 1] = data[npix + p] as f32;
        out[3 * p + 2] = data[2 * npix + p] as f32;
    }
    ImageF::from_data(w, h, out)
}
