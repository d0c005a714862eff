//! Prior-feature files, the style-space mapper, and text/image blending.
//!
//! Prior features are produced externally (one forward pass of a large
//! text-conditioned model, dumped to disk) and mapped into the style
//! feature space so they can replace the style pyramid. Desk-scale tests
//! synthesize them from the encoder itself (self-distillation).

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{image_to_tensor, FeaturePyramid, LEVEL_CHANNELS, THUMB_SIZE};
use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::irstyle::{IrStyleModel, TransferResult};
use crate::lut::{materialize_clut, LutWeights};
use crate::nn::init;
use crate::nn::ops::mse;
use crate::nn::tensor::Tensor;
use crate::nn::{Adam, Parameter};

pub const FEATURE_MAGIC: &[u8; 4] = b"MRSF";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_COUNT: usize = 4;

/// One per-scale tensor as stored on disk.
#[derive(Clone, Debug)]
pub struct PriorTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug)]
pub struct PriorFeatureFile {
    pub tensors: Vec<PriorTensor>,
    /// Free-form provenance (seed, timestep); not interpreted.
    pub metadata: Option<String>,
}

pub fn write_feature_file(path: &Path, file: &PriorFeatureFile) -> Result<()> {
    if file.tensors.len() != FEATURE_COUNT {
        return Err(Error::Format(format!(
            "feature file must hold {FEATURE_COUNT} tensors, got {}",
            file.tensors.len()
        )));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(file.tensors.len() as u32).to_le_bytes())?;
    for t in &file.tensors {
        let n: usize = t.shape.iter().product();
        if n != t.data.len() {
            return Err(Error::Format("tensor shape does not match data length".into()));
        }
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * t.data.len());
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    if let Some(meta) = &file.metadata {
        let bytes = meta.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<PriorFeatureFile> {
    use crate::nn::checkpoint::Tracked;
    let mut r = Tracked::new(std::io::BufReader::new(std::fs::File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format(format!(
            "bad feature magic {:?} at byte offset 0 (expected {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(FEATURE_MAGIC)
        )));
    }
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!(
            "unsupported feature version {version} at byte offset 4"
        )));
    }
    let count = r.u32()? as usize;
    if count != FEATURE_COUNT {
        return Err(Error::Format(format!(
            "feature file must hold {FEATURE_COUNT} tensors, got {count} (byte offset 8)"
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let at = r.pos();
        let mut buf = vec![0u8; 4 * n];
        r.read_exact(&mut buf)?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "tensor {i} (byte offset {at}) contains non-finite values"
            )));
        }
        tensors.push(PriorTensor { shape, data });
    }
    let metadata = match r.u32_or_end()? {
        Some(len) => {
            let at = r.pos();
            let mut buf = vec![0u8; len as usize];
            r.read_exact(&mut buf)?;
            Some(String::from_utf8(buf).map_err(|_| {
                Error::Format(format!("metadata at byte offset {at} is not valid utf-8"))
            })?)
        }
        None => None,
    };
    Ok(PriorFeatureFile { tensors, metadata })
}

/// Per-scale conv 3x3 + ReLU + conv 3x3 (bias zero-init), then bilinear
/// resize to the style pyramid shape.
pub struct PriorMapper {
    blocks: Vec<(Parameter, Parameter, Parameter, Parameter)>,
    in_channels: [usize; 4],
}

impl PriorMapper {
    pub fn new(seed: u64, in_channels: [usize; 4]) -> PriorMapper {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x4d41_50));
        let blocks = (0..4)
            .map(|i| {
                let c_in = in_channels[i];
                let c_out = LEVEL_CHANNELS[i];
                (
                    Parameter::new(
                        init::conv_weight(&mut rng, c_out, c_in, 3, 3),
                        format!("mapper.block{i}.conv1.weight"),
                    ),
                    Parameter::new(init::zeros_leaf(&[c_out]), format!("mapper.block{i}.conv1.bias")),
                    Parameter::new(
                        init::conv_weight(&mut rng, c_out, c_out, 3, 3),
                        format!("mapper.block{i}.conv2.weight"),
                    ),
                    Parameter::new(init::zeros_leaf(&[c_out]), format!("mapper.block{i}.conv2.bias")),
                )
            })
            .collect();
        PriorMapper { blocks, in_channels }
    }

    /// Mapper sized for self-distillation priors (encoder-shaped inputs).
    pub fn for_encoder_priors(seed: u64) -> PriorMapper {
        PriorMapper::new(seed, LEVEL_CHANNELS)
    }

    pub fn params(&self) -> Vec<Parameter> {
        self.blocks
            .iter()
            .flat_map(|(w1, b1, w2, b2)| [w1.clone(), b1.clone(), w2.clone(), b2.clone()])
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::nn::checkpoint::save_params(path, &self.params())
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        crate::nn::checkpoint::load_params(path, &self.params())
    }
}

/// Style pyramid spatial sizes for the 256 thumbnail.
fn level_size(i: usize) -> usize {
    THUMB_SIZE >> (i + 1)
}

/// Maps prior tensors into the style feature space.
pub fn map_prior_features(priors: &PriorFeatureFile, mapper: &PriorMapper) -> Result<FeaturePyramid> {
    let mut levels = Vec::with_capacity(4);
    for (i, t) in priors.tensors.iter().enumerate() {
        if t.shape.len() != 4 || t.shape[0] != 1 || t.shape[1] != mapper.in_channels[i] {
            return Err(Error::ShapeMismatch(format!(
                "prior tensor {i}: {:?} does not match mapper input ({} channels)",
                t.shape, mapper.in_channels[i]
            )));
        }
        let x = Tensor::from_vec(t.data.iter().map(|&v| v as f64).collect(), &t.shape);
        let (w1, b1, w2, b2) = &mapper.blocks[i];
        let y = x.conv2d(&w1.tensor, &b1.tensor, 1, 1).relu();
        let y = y.conv2d(&w2.tensor, &b2.tensor, 1, 1);
        levels.push(y.resize_bilinear(level_size(i), level_size(i)));
    }
    Ok(FeaturePyramid { levels })
}

/// F = w * F_image + (1 - w) * F_mapped, exact at the endpoints.
pub fn blend_style_features(
    f_image: &FeaturePyramid,
    f_mapped: &FeaturePyramid,
    w: f64,
) -> Result<FeaturePyramid> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::BlendWeight(w));
    }
    let mut levels = Vec::with_capacity(4);
    for (a, b) in f_image.levels.iter().zip(&f_mapped.levels) {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch(format!(
                "blend: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let lvl = if w == 1.0 {
            a.clone()
        } else if w == 0.0 {
            b.clone()
        } else {
            a.mul_scalar(w).add(&b.mul_scalar(1.0 - w))
        };
        levels.push(lvl);
    }
    Ok(FeaturePyramid { levels })
}

/// Transfer with an explicit style pyramid instead of a style image.
pub fn transfer_with_style_features(
    model: &IrStyleModel,
    content: &ImageF,
    fs: &FeaturePyramid,
    threads: usize,
) -> Result<TransferResult> {
    if content.is_empty() {
        return Err(Error::EmptyImage);
    }
    let thumb = if content.width == THUMB_SIZE && content.height == THUMB_SIZE {
        image_to_tensor(content)
    } else {
        image_to_tensor(&content.resize_bilinear(THUMB_SIZE, THUMB_SIZE))
    };
    let fc = model.encoder.encode(&thumb)?;
    let (cw, sw) = model.forward_weights(&fc, fs)?;
    let sweights: Vec<f32> = sw.data().iter().map(|&v| v as f32).collect();
    let style_lut = materialize_clut(&model.style_bank()?, &LutWeights(sweights))?;
    match cw {
        Some(cw) => {
            let cweights: Vec<f32> = cw.data().iter().map(|&v| v as f32).collect();
            let content_lut = materialize_clut(
                &model.content_bank()?.expect("dual variant"),
                &LutWeights(cweights),
            )?;
            let mc = content_lut.apply_threaded(content, threads)?;
            let output = style_lut.apply_threaded(&mc, threads)?;
            Ok(TransferResult {
                output,
                content_lut: Some(content_lut),
                style_lut,
                content_map: Some(mc),
            })
        }
        None => Ok(TransferResult {
            output: style_lut.apply_threaded(content, threads)?,
            content_lut: None,
            style_lut,
            content_map: None,
        }),
    }
}

/// Encoder pyramid of the style thumbnail serialized as a prior file —
/// the self-distillation stand-in for an external feature dump.
pub fn synth_prior_features(model: &IrStyleModel, style: &ImageF, metadata: Option<String>) -> Result<PriorFeatureFile> {
    let thumb = if style.width == THUMB_SIZE && style.height == THUMB_SIZE {
        image_to_tensor(style)
    } else {
        image_to_tensor(&style.resize_bilinear(THUMB_SIZE, THUMB_SIZE))
    };
    let fs = model.encoder.encode(&thumb)?;
    let tensors = fs
        .levels
        .iter()
        .map(|l| PriorTensor {
            shape: l.shape(),
            data: l.data().iter().map(|&v| v as f32).collect(),
        })
        .collect();
    Ok(PriorFeatureFile { tensors, metadata })
}

pub struct Triplet {
    pub content: ImageF,
    pub priors: PriorFeatureFile,
    pub target: ImageF,
}

/// One distillation update: forward with mapped style features, L_teach =
/// MSE(Y, I_g), Adam step on the mapper only. The caller must have frozen
/// the model (`model.set_frozen(true)`).
pub fn train_mapper_step(
    mapper: &PriorMapper,
    triplet: &Triplet,
    model: &IrStyleModel,
    optimizer: &mut Adam,
) -> Result<f64> {
    if triplet.target.width != triplet.content.width || triplet.target.height != triplet.content.height {
        return Err(Error::ShapeMismatch("triplet target dims != content dims".into()));
    }
    let params = mapper.params();
    optimizer.zero_grad(&params);
    let tc = image_to_tensor(&triplet.content);
    let fc = model.encoder.encode(&tc)?;
    let fm = map_prior_features(&triplet.priors, mapper)?;
    let g = model.transfer_graph(&tc, &fc, &fm)?;
    let tg = image_to_tensor(&triplet.target);
    let shape = tg.shape();
    let target = Tensor::from_vec(tg.to_vec(), &[shape[1], shape[2], shape[3]]);
    let loss = mse(&g.output, &target);
    let v = loss.item();
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss(format!("l_teach={v}")));
    }
    loss.backward()?;
    optimizer.step(&params);
    Ok(v)
}
