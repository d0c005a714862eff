//! LUT predictors and the image-reference transfer pipeline.
//!
//! Three architectures: a single direct LUT predicted from interaction
//! features, a dual content/style pair predicted from each image's own
//! features, and the full interaction dual-mapping network (default).
//! Heads end in a zero-initialized linear layer, so a fresh model predicts
//! all-zero LUT weights and transfer is an exact identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{image_to_tensor, Encoder, FeaturePyramid, LEVEL_CHANNELS, THUMB_SIZE};
use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::lut::{materialize_clut, ClutBank, Lut3d, LutWeights, DEFAULT_LUT_SIZE};
use crate::nn::init;
use crate::nn::lut_ops::{clut_materialize, lut_apply};
use crate::nn::tensor::Tensor;
use crate::nn::Parameter;

/// Basis tables per predicted LUT.
pub const LUT_BASIS_COUNT: usize = 20;
/// Interaction features are pooled to this edge before the heads.
const POOL_SIZE: usize = 16;
/// Channel width of the head conv blocks.
const HEAD_WIDTH: usize = 64;
const ADAIN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ArchVariant {
    /// One LUT from the interaction features.
    InteractionDirect,
    /// Content + style LUTs, each head sees only its own image's features.
    NonInteractionDual,
    /// Content + style LUTs with AdaIN interaction features (full version).
    InteractionDual,
}

impl Default for ArchVariant {
    fn default() -> Self {
        ArchVariant::InteractionDual
    }
}

impl ArchVariant {
    pub fn parse(s: &str) -> Result<ArchVariant> {
        match s {
            "direct" => Ok(ArchVariant::InteractionDirect),
            "dual" => Ok(ArchVariant::NonInteractionDual),
            "interaction-dual" => Ok(ArchVariant::InteractionDual),
            other => Err(Error::Format(format!(
                "unknown variant '{other}' (expected direct, dual, or interaction-dual)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchVariant::InteractionDirect => "direct",
            ArchVariant::NonInteractionDual => "dual",
            ArchVariant::InteractionDual => "interaction-dual",
        }
    }

    pub fn is_dual(&self) -> bool {
        !matches!(self, ArchVariant::InteractionDirect)
    }

    fn head_in_channels(&self) -> usize {
        let own: usize = LEVEL_CHANNELS.iter().sum();
        match self {
            ArchVariant::InteractionDual => 2 * own,
            _ => own,
        }
    }
}

/// 4 strided conv blocks -> global average pool -> zero-init linear -> K.
struct Head {
    convs: Vec<(Parameter, Parameter)>,
    fc_w: Parameter,
    fc_b: Parameter,
}

impl Head {
    fn new(rng: &mut ChaCha8Rng, prefix: &str, c_in: usize, k: usize) -> Head {
        let mut convs = Vec::with_capacity(4);
        let mut c = c_in;
        for i in 0..4 {
            let w = Parameter::new(
                init::conv_weight(rng, HEAD_WIDTH, c, 3, 3),
                format!("{prefix}.conv{i}.weight"),
            );
            let b = Parameter::new(
                init::zeros_leaf(&[HEAD_WIDTH]),
                format!("{prefix}.conv{i}.bias"),
            );
            convs.push((w, b));
            c = HEAD_WIDTH;
        }
        Head {
            convs,
            fc_w: Parameter::new(init::zeros_leaf(&[k, HEAD_WIDTH]), format!("{prefix}.fc.weight")),
            fc_b: Parameter::new(init::zeros_leaf(&[k]), format!("{prefix}.fc.bias")),
        }
    }

    fn params(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        for (w, b) in &self.convs {
            out.push(w.clone());
            out.push(b.clone());
        }
        out.push(self.fc_w.clone());
        out.push(self.fc_b.clone());
        out
    }

    /// [1, C_in, 16, 16] -> [K] LUT weights.
    fn forward(&self, features: &Tensor) -> Tensor {
        let mut x = features.clone();
        for (w, b) in &self.convs {
            x = x.conv2d(&w.tensor, &b.tensor, 2, 1).relu();
        }
        let pooled = x.global_avg_pool();
        let k = self.fc_b.tensor.numel();
        pooled.linear(&self.fc_w.tensor, &self.fc_b.tensor).reshape(&[k])
    }
}

/// Predicted LUT pair; `content` is absent for the direct variant.
pub struct PredictedLuts {
    pub content: Option<Lut3d>,
    pub style: Lut3d,
    pub content_weights: Option<Vec<f32>>,
    pub style_weights: Vec<f32>,
}

pub struct TransferResult {
    pub output: ImageF,
    pub content_lut: Option<Lut3d>,
    pub style_lut: Lut3d,
    pub content_map: Option<ImageF>,
}

/// Paired-branch tensors for the training losses.
pub struct PairedBranch {
    pub y1: Tensor,
    pub mc1: Option<Tensor>,
    pub mc2: Option<Tensor>,
}

/// In-graph transfer used by training; tensors stay on the tape.
pub struct GraphTransfer {
    pub output: Tensor,
    pub content_map: Option<Tensor>,
    pub content_weights: Option<Tensor>,
    pub style_weights: Tensor,
}

pub struct IrStyleModel {
    pub variant: ArchVariant,
    pub encoder: Encoder,
    content_head: Option<Head>,
    style_head: Head,
    content_basis: Option<Parameter>,
    style_basis: Parameter,
    lut_size: usize,
    k: usize,
}

fn basis_param(rng: &mut ChaCha8Rng, name: &str, k: usize, size: usize) -> Parameter {
    // Structured residual tables: per-channel contrast, offset, and
    // curvature, cross-channel ramps, global contrast/brightness, and a
    // desaturation direction, padded with low-amplitude noise. Random
    // tables only span noise-like edits, which the heads cannot combine
    // into the smooth color transforms training needs; a structured bank
    // makes those directions reachable with order-one head weights. The
    // heads start at zero, so initialization is still exactly identity,
    // and the bank itself remains trainable.
    const CROSS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
    let m = 3 * size * size * size;
    let structured = 18.min(k);
    let mut data = init::kaiming_uniform(rng, &[k, m], 10_000).to_vec();
    let s = 0.1;
    for (j, tbl) in data.chunks_mut(m).take(structured).enumerate() {
        let mut idx = 0;
        for b in 0..size {
            for g in 0..size {
                for r in 0..size {
                    let x = [
                        r as f64 / (size - 1) as f64 - 0.5,
                        g as f64 / (size - 1) as f64 - 0.5,
                        b as f64 / (size - 1) as f64 - 0.5,
                    ];
                    for (c, xc) in x.iter().enumerate() {
                        tbl[idx] = s * match j {
                            0..=2 if j == c => 2.0 * xc,
                            3..=5 if j - 3 == c => 1.0,
                            6..=8 if j - 6 == c => 4.0 * xc * xc - 1.0 / 3.0,
                            9..=14 if CROSS[j - 9].0 == c => 2.0 * x[CROSS[j - 9].1],
                            15 => 2.0 * xc,
                            16 => 1.0,
                            17 => 2.0 * ((x[0] + x[1] + x[2]) / 3.0 - xc),
                            _ => 0.0,
                        };
                        idx += 1;
                    }
                }
            }
        }
    }
    let t = Tensor::from_vec(data, &[k, m]);
    Parameter::new(t, name)
}

impl IrStyleModel {
    pub fn new(variant: ArchVariant, seed: u64) -> IrStyleModel {
        IrStyleModel::with_lut_size(variant, seed, DEFAULT_LUT_SIZE)
    }

    pub fn with_lut_size(variant: ArchVariant, seed: u64, lut_size: usize) -> IrStyleModel {
        let k = LUT_BASIS_COUNT;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5747_11));
        let c_in = variant.head_in_channels();
        let (content_head, content_basis) = if variant.is_dual() {
            (
                Some(Head::new(&mut rng, "content_head", c_in, k)),
                Some(basis_param(&mut rng, "content.basis", k, lut_size)),
            )
        } else {
            (None, None)
        };
        let style_head = Head::new(&mut rng, "style_head", c_in, k);
        let style_basis = basis_param(&mut rng, "style.basis", k, lut_size);
        IrStyleModel {
            variant,
            encoder: Encoder::new(seed),
            content_head,
            style_head,
            content_basis,
            style_basis,
            lut_size,
            k,
        }
    }

    pub fn lut_size(&self) -> usize {
        self.lut_size
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut out = self.encoder.params();
        if let Some(h) = &self.content_head {
            out.extend(h.params());
        }
        out.extend(self.style_head.params());
        if let Some(b) = &self.content_basis {
            out.push(b.clone());
        }
        out.push(self.style_basis.clone());
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save_params(path, &self.params())
    }

    pub fn load(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::load_params(path, &self.params())
    }

    /// Head input: concat over scales, each pooled to 16x16.
    fn head_features(&self, own: &FeaturePyramid, other: &FeaturePyramid) -> Result<Tensor> {
        let mut parts = Vec::new();
        for (fo, ft) in own.levels.iter().zip(&other.levels) {
            match self.variant {
                ArchVariant::InteractionDual => {
                    parts.push(fo.resize_bilinear(POOL_SIZE, POOL_SIZE));
                    parts.push(fo.adain(ft, ADAIN_EPS)?.resize_bilinear(POOL_SIZE, POOL_SIZE));
                }
                ArchVariant::NonInteractionDual => {
                    parts.push(fo.resize_bilinear(POOL_SIZE, POOL_SIZE));
                }
                ArchVariant::InteractionDirect => {
                    parts.push(fo.adain(ft, ADAIN_EPS)?.resize_bilinear(POOL_SIZE, POOL_SIZE));
                }
            }
        }
        Ok(Tensor::concat_channels(&parts))
    }

    /// Weight vectors on the tape: (content weights if dual, style weights).
    pub fn forward_weights(
        &self,
        fc: &FeaturePyramid,
        fs: &FeaturePyramid,
    ) -> Result<(Option<Tensor>, Tensor)> {
        let style_in = match self.variant {
            ArchVariant::InteractionDirect => self.head_features(fc, fs)?,
            _ => self.head_features(fs, fc)?,
        };
        let style_w = self.style_head.forward(&style_in);
        let content_w = match &self.content_head {
            Some(h) => {
                let content_in = self.head_features(fc, fs)?;
                Some(h.forward(&content_in))
            }
            None => None,
        };
        Ok((content_w, style_w))
    }

    /// In-graph lattices (flat [3*D^3]) for the training losses.
    pub fn forward_lattices(
        &self,
        fc: &FeaturePyramid,
        fs: &FeaturePyramid,
    ) -> Result<(Option<Tensor>, Tensor, Option<Tensor>, Tensor)> {
        let (cw, sw) = self.forward_weights(fc, fs)?;
        let style_lat = clut_materialize(&self.style_basis.tensor, &sw, self.lut_size);
        let content_lat = match (&self.content_basis, &cw) {
            (Some(b), Some(w)) => Some(clut_materialize(&b.tensor, w, self.lut_size)),
            _ => None,
        };
        Ok((content_lat, style_lat, cw, sw))
    }

    /// Paired-branch graph: Y1/M_c1 for (content=I1, style=I2) plus M_c2
    /// for the swapped roles. The swapped content-head input equals the
    /// straight style-head input, so the interaction features are built
    /// once per direction.
    pub fn paired_branch(
        &self,
        t1: &Tensor,
        t2: &Tensor,
        f1: &FeaturePyramid,
        f2: &FeaturePyramid,
    ) -> Result<PairedBranch> {
        let shape = t1.shape();
        let img1 = t1.reshape(&[shape[1], shape[2], shape[3]]);
        if !self.variant.is_dual() {
            let feats = self.head_features(f1, f2)?;
            let w = self.style_head.forward(&feats);
            let lat = clut_materialize(&self.style_basis.tensor, &w, self.lut_size);
            return Ok(PairedBranch {
                y1: lut_apply(&lat, &img1, self.lut_size),
                mc1: None,
                mc2: None,
            });
        }
        let feats_12 = self.head_features(f1, f2)?; // own = I1
        let feats_21 = self.head_features(f2, f1)?; // own = I2
        let content_head = self.content_head.as_ref().expect("dual variant");
        let content_basis = self.content_basis.as_ref().expect("dual variant");
        let cw1 = content_head.forward(&feats_12);
        let sw1 = self.style_head.forward(&feats_21);
        let cw2 = content_head.forward(&feats_21);
        let cl1 = clut_materialize(&content_basis.tensor, &cw1, self.lut_size);
        let sl1 = clut_materialize(&self.style_basis.tensor, &sw1, self.lut_size);
        let cl2 = clut_materialize(&content_basis.tensor, &cw2, self.lut_size);
        let mc1 = lut_apply(&cl1, &img1, self.lut_size);
        let y1 = lut_apply(&sl1, &mc1, self.lut_size);
        let shape2 = t2.shape();
        let img2 = t2.reshape(&[shape2[1], shape2[2], shape2[3]]);
        let mc2 = lut_apply(&cl2, &img2, self.lut_size);
        Ok(PairedBranch {
            y1,
            mc1: Some(mc1),
            mc2: Some(mc2),
        })
    }

    /// In-graph transfer: content tensor [1, 3, H, W] plus both pyramids.
    pub fn transfer_graph(
        &self,
        content: &Tensor,
        fc: &FeaturePyramid,
        fs: &FeaturePyramid,
    ) -> Result<GraphTransfer> {
        let (content_lat, style_lat, cw, sw) = self.forward_lattices(fc, fs)?;
        let shape = content.shape();
        let img = content.reshape(&[shape[1], shape[2], shape[3]]);
        let (output, content_map) = match content_lat {
            Some(cl) => {
                let mc = lut_apply(&cl, &img, self.lut_size);
                (lut_apply(&style_lat, &mc, self.lut_size), Some(mc))
            }
            None => (lut_apply(&style_lat, &img, self.lut_size), None),
        };
        Ok(GraphTransfer {
            output,
            content_map,
            content_weights: cw,
            style_weights: sw,
        })
    }

    /// Toggles gradient tracking on every parameter. Frozen parameters
    /// still participate in forward passes; they just build no grad
    /// closures, which keeps distillation backward passes cheap.
    pub fn set_frozen(&self, frozen: bool) {
        for p in self.params() {
            p.tensor.set_requires_grad(!frozen);
        }
    }

    pub fn style_bank(&self) -> Result<ClutBank> {
        self.bank(&self.style_basis)
    }

    pub fn content_bank(&self) -> Result<Option<ClutBank>> {
        match &self.content_basis {
            Some(b) => Ok(Some(self.bank(b)?)),
            None => Ok(None),
        }
    }

    fn bank(&self, basis: &Parameter) -> Result<ClutBank> {
        let m = 3 * self.lut_size * self.lut_size * self.lut_size;
        let data = basis.tensor.to_vec();
        let rows = (0..self.k)
            .map(|i| data[i * m..(i + 1) * m].iter().map(|&v| v as f32).collect())
            .collect();
        ClutBank::new(self.lut_size, rows)
    }

    fn thumbnail(img: &ImageF) -> Tensor {
        if img.width == THUMB_SIZE && img.height == THUMB_SIZE {
            image_to_tensor(img)
        } else {
            image_to_tensor(&img.resize_bilinear(THUMB_SIZE, THUMB_SIZE))
        }
    }

    /// Predict the LUT set from two already-loaded images (any resolution;
    /// thumbnails are produced internally).
    pub fn predict_luts(&self, content: &ImageF, style: &ImageF) -> Result<PredictedLuts> {
        if content.is_empty() || style.is_empty() {
            return Err(Error::EmptyImage);
        }
        let fc = self.encoder.encode(&Self::thumbnail(content))?;
        let fs = self.encoder.encode(&Self::thumbnail(style))?;
        let (cw, sw) = self.forward_weights(&fc, &fs)?;
        let style_weights: Vec<f32> = sw.data().iter().map(|&v| v as f32).collect();
        let style = materialize_clut(&self.bank(&self.style_basis)?, &LutWeights(style_weights.clone()))?;
        let (content_lut, content_weights) = match (&self.content_basis, cw) {
            (Some(basis), Some(w)) => {
                let wv: Vec<f32> = w.data().iter().map(|&v| v as f32).collect();
                let lut = materialize_clut(&self.bank(basis)?, &LutWeights(wv.clone()))?;
                (Some(lut), Some(wv))
            }
            _ => (None, None),
        };
        Ok(PredictedLuts {
            content: content_lut,
            style,
            content_weights,
            style_weights,
        })
    }

    /// Full-resolution transfer: predict on thumbnails, apply to the
    /// original content image.
    pub fn transfer(&self, content: &ImageF, style: &ImageF) -> Result<TransferResult> {
        self.transfer_threaded(content, style, 1)
    }

    pub fn transfer_threaded(
        &self,
        content: &ImageF,
        style: &ImageF,
        threads: usize,
    ) -> Result<TransferResult> {
        let luts = self.predict_luts(content, style)?;
        match luts.content {
            Some(content_lut) => {
                let mc = content_lut.apply_threaded(content, threads)?;
                let output = luts.style.apply_threaded(&mc, threads)?;
                Ok(TransferResult {
                    output,
                    content_lut: Some(content_lut),
                    style_lut: luts.style,
                    content_map: Some(mc),
                })
            }
            None => Ok(TransferResult {
                output: luts.style.apply_threaded(content, threads)?,
                content_lut: None,
                style_lut: luts.style,
                content_map: None,
            }),
        }
    }
}

/// Convenience wrapper mirroring `transfer_graph` for image inputs.
pub fn transfer_images(model: &IrStyleModel, content: &ImageF, style: &ImageF) -> Result<ImageF> {
    Ok(model.transfer(content, style)?.output)
}

pub use crate::encoder::tensor_to_image as graph_output_to_image;
