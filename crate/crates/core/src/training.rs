//! Sample synthesis, the loss functions, and the combined training loop.
//!
//! Each step draws a paired sample (one source image under two random
//! filters) and an unpaired sample (the paired content against a style
//! from a different image), and optimizes the sum of both supervision
//! signals.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{image_to_tensor, Encoder, FeaturePyramid};
use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::irstyle::{ArchVariant, IrStyleModel};
use crate::lut::{apply_lut, Lut3d};
use crate::nn::ops::{mse, soft_histogram};
use crate::nn::tensor::Tensor;
use crate::nn::Adam;

pub const CROP_SIZE: usize = 256;

/// Weight on the cross-map consistency term of the paired loss. The two
/// content maps must agree far more tightly than the raw inputs do, and at
/// unit weight the term is drowned out by the reconstruction and unpaired
/// losses.
pub const CM_WEIGHT: f64 = 300.0;

/// Learning-rate multiplier for the zero-initialized fully connected
/// LUT-weight heads; see [`train`].
pub const FC_LR_MULT: f64 = 25.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub lambda: f64,
    pub bins: usize,
    pub variant: ArchVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            lr: 5e-4,
            steps: 500,
            batch: 4,
            lambda: 1.0,
            bins: 64,
            variant: ArchVariant::default(),
        }
    }
}

impl TrainConfig {
    /// Parses a line-based `key = value` file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected key = value", idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Format(format!("config line {}: invalid {what} '{value}'", idx + 1))
            };
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("steps"))?,
                "batch" => cfg.batch = value.parse().map_err(|_| bad("batch"))?,
                "lambda" => cfg.lambda = value.parse().map_err(|_| bad("lambda"))?,
                "bins" => cfg.bins = value.parse().map_err(|_| bad("bins"))?,
                "variant" => cfg.variant = ArchVariant::parse(value)?,
                other => {
                    return Err(Error::Format(format!(
                        "config line {}: unknown key '{other}'",
                        idx + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        TrainConfig::parse(&std::fs::read_to_string(path)?)
    }
}

pub struct PairedSample {
    pub i1: ImageF,
    pub i2: ImageF,
}

pub struct UnpairedSample {
    pub content: ImageF,
    pub style: ImageF,
}

/// Same random crop of `source` under the two filters.
pub fn make_paired_sample(
    rng: &mut ChaCha8Rng,
    source: &ImageF,
    filter1: &Lut3d,
    filter2: &Lut3d,
) -> Result<PairedSample> {
    let crop = random_crop(rng, source)?;
    Ok(PairedSample {
        i1: apply_lut(filter1, &crop)?,
        i2: apply_lut(filter2, &crop)?,
    })
}

pub fn random_crop(rng: &mut ChaCha8Rng, source: &ImageF) -> Result<ImageF> {
    if source.width < CROP_SIZE || source.height < CROP_SIZE {
        return Err(Error::UndersizedSource {
            width: source.width,
            height: source.height,
            need: CROP_SIZE,
        });
    }
    let x0 = if source.width == CROP_SIZE { 0 } else { rng.gen_range(0..=source.width - CROP_SIZE) };
    let y0 = if source.height == CROP_SIZE { 0 } else { rng.gen_range(0..=source.height - CROP_SIZE) };
    Ok(source.crop(x0, y0, CROP_SIZE, CROP_SIZE))
}

/// MSE(y1, i2) + MSE(mc1, mc2). The content-map terms are omitted for the
/// direct architecture, which has no content map.
pub fn loss_pair(
    y1: &Tensor,
    i2: &Tensor,
    mc1: Option<&Tensor>,
    mc2: Option<&Tensor>,
) -> Result<(Tensor, f64, f64)> {
    if y1.shape() != i2.shape() {
        return Err(Error::ShapeMismatch(format!(
            "loss_pair: y1 {:?} vs i2 {:?}",
            y1.shape(),
            i2.shape()
        )));
    }
    let l_self = mse(y1, i2);
    let self_v = l_self.item();
    match (mc1, mc2) {
        (Some(a), Some(b)) => {
            if a.shape() != b.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "loss_pair: mc1 {:?} vs mc2 {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let l_cm = mse(a, b);
            let cm_v = l_cm.item();
            Ok((l_self.add(&l_cm.mul_scalar(CM_WEIGHT)), self_v, cm_v))
        }
        _ => Ok((l_self, self_v, 0.0)),
    }
}

pub struct UnpairLoss {
    pub total: Tensor,
    pub content: f64,
    pub style: f64,
    pub hist: f64,
}

/// Unpaired terms from precomputed pyramids. `f_y2` must be a tape-attached
/// pyramid of y2 (frozen-weight encode); `f_i2`/`f_i3` serve as fixed
/// targets and are detached internally.
pub fn loss_unpair_from_features(
    y2: &Tensor,
    f_y2: &FeaturePyramid,
    f_i2: &FeaturePyramid,
    f_i3: &FeaturePyramid,
    hist_i3: &Tensor,
    bins: usize,
) -> Result<UnpairLoss> {
    let l_content = mse(&f_y2.levels[3], &f_i2.levels[3].detach());
    let mut l_style: Option<Tensor> = None;
    for lvl in 0..2 {
        let a = &f_y2.levels[lvl];
        let b = &f_i3.levels[lvl];
        let term = mse(&a.channel_mean(), &b.channel_mean().detach())
            .add(&mse(&a.channel_std(1e-5), &b.channel_std(1e-5).detach()));
        l_style = Some(match l_style {
            Some(s) => s.add(&term),
            None => term,
        });
    }
    let l_style = l_style.unwrap();
    let h_y2 = soft_histogram(y2, bins)?;
    let diff = h_y2.sub(&hist_i3.detach());
    let l_hist = diff.mul(&diff).sum();
    let (content, style, hist) = (l_content.item(), l_style.item(), l_hist.item());
    Ok(UnpairLoss {
        total: l_content.add(&l_style).add(&l_hist),
        content,
        style,
        hist,
    })
}

/// Convenience entry: runs the (frozen) encoder on all three images.
/// `y2` is [3, H, W] on the tape, `i2`/`i3` are plain images.
pub fn loss_unpair(
    y2: &Tensor,
    i2: &ImageF,
    i3: &ImageF,
    encoder: &Encoder,
    bins: usize,
) -> Result<UnpairLoss> {
    let shape = y2.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::ShapeMismatch(format!("loss_unpair: y2 {shape:?}")));
    }
    let y2_4d = y2.reshape(&[1, 3, shape[1], shape[2]]);
    let f_y2 = encoder.forward_frozen(&y2_4d);
    let f_i2 = encoder.forward_frozen(&image_to_tensor(i2));
    let t3 = image_to_tensor(i3);
    let f_i3 = encoder.forward_frozen(&t3);
    let hist_i3 = soft_histogram(&t3.reshape(&[3, i3.height, i3.width]), bins)?;
    loss_unpair_from_features(y2, &f_y2, &f_i2, &f_i3, &hist_i3, bins)
}

#[derive(Clone, Copy, Debug)]
pub struct StepLosses {
    pub total: f64,
    pub l_self: f64,
    pub l_cm: f64,
    pub content: f64,
    pub style: f64,
    pub hist: f64,
}

/// Builds the combined loss graph for one (paired, unpaired) sample.
/// Returns the scalar tape node plus the term values.
pub fn sample_loss(
    model: &IrStyleModel,
    paired: &PairedSample,
    unpaired: &UnpairedSample,
    lambda: f64,
    bins: usize,
) -> Result<(Tensor, StepLosses)> {
    let t1 = image_to_tensor(&paired.i1);
    let t2 = image_to_tensor(&paired.i2);
    let f1 = model.encoder.encode(&t1)?;
    let f2 = model.encoder.encode(&t2)?;

    // paired branch: I1 as content, I2 as style, plus the swapped-role
    // content map for the cross-map term
    let pb = model.paired_branch(&t1, &t2, &f1, &f2)?;
    let i2_target = Tensor::from_vec(t2.to_vec(), &[3, CROP_SIZE, CROP_SIZE]);
    let (l_pair, l_self, l_cm) = loss_pair(&pb.y1, &i2_target, pb.mc1.as_ref(), pb.mc2.as_ref())?;

    // unpaired branch: I2 as content (pyramid reused when possible), I3 as style
    let same_content = unpaired.content.data == paired.i2.data;
    let (tc, fc) = if same_content {
        (t2.clone(), f2)
    } else {
        let tc = image_to_tensor(&unpaired.content);
        let fc = model.encoder.encode(&tc)?;
        (tc, fc)
    };
    let t3 = image_to_tensor(&unpaired.style);
    let f3 = model.encoder.encode(&t3)?;
    let g2 = model.transfer_graph(&tc, &fc, &f3)?;
    let y2_4d = g2.output.reshape(&[1, 3, CROP_SIZE, CROP_SIZE]);
    let f_y2 = model.encoder.forward_frozen(&y2_4d);
    let hist_i3 = soft_histogram(&t3.reshape(&[3, CROP_SIZE, CROP_SIZE]), bins)?;
    let un = loss_unpair_from_features(&g2.output, &f_y2, &fc, &f3, &hist_i3, bins)?;

    let total = l_pair.add(&un.total.mul_scalar(lambda));
    let record = StepLosses {
        total: total.item(),
        l_self,
        l_cm,
        content: un.content,
        style: un.style,
        hist: un.hist,
    };
    if !record.total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "self={l_self} cm={l_cm} content={} style={} hist={}",
            un.content, un.style, un.hist
        )));
    }
    Ok((total, record))
}

/// One optimizer update from one paired + one unpaired sample.
pub fn train_step(
    model: &IrStyleModel,
    paired: &PairedSample,
    unpaired: &UnpairedSample,
    optimizer: &mut Adam,
    lambda: f64,
    bins: usize,
) -> Result<StepLosses> {
    let params = model.params();
    optimizer.zero_grad(&params);
    let (total, record) = sample_loss(model, paired, unpaired, lambda, bins)?;
    total.backward()?;
    optimizer.step(&params);
    Ok(record)
}

pub struct Corpus {
    pub images: Vec<ImageF>,
    pub filters: Vec<Lut3d>,
}

impl Corpus {
    /// Draws one paired + one unpaired sample; the unpaired content is the
    /// paired i2, the style comes from a different source image.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<(PairedSample, UnpairedSample)> {
        assert!(self.images.len() >= 2, "corpus needs at least two images");
        assert!(self.filters.len() >= 2, "corpus needs at least two filters");
        let src = rng.gen_range(0..self.images.len());
        let fa = rng.gen_range(0..self.filters.len());
        let fb = rng.gen_range(0..self.filters.len());
        let paired = make_paired_sample(rng, &self.images[src], &self.filters[fa], &self.filters[fb])?;
        let mut other = rng.gen_range(0..self.images.len());
        if other == src {
            other = (other + 1) % self.images.len();
        }
        let fs = rng.gen_range(0..self.filters.len());
        let style_crop = random_crop(rng, &self.images[other])?;
        let unpaired = UnpairedSample {
            content: paired.i2.clone(),
            style: apply_lut(&self.filters[fs], &style_crop)?,
        };
        Ok((paired, unpaired))
    }
}

/// Seeded training loop; gradients are averaged over `batch` samples per
/// optimizer update.
pub fn train(
    model: &IrStyleModel,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, &StepLosses),
) -> Result<Vec<StepLosses>> {
    let params = model.params();
    // the fully connected LUT-weight layers start at zero, so at first they
    // are the only parameters with gradient and everything downstream waits
    // on them; a higher rate there ignites training within the step budget
    let (fc_params, base_params): (Vec<_>, Vec<_>) =
        params.iter().cloned().partition(|p| p.name.contains(".fc."));
    let mut fc_optimizer = Adam::new(&fc_params, cfg.lr * FC_LR_MULT);
    let mut optimizer = Adam::new(&base_params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        optimizer.zero_grad(&params);
        let mut acc = StepLosses {
            total: 0.0,
            l_self: 0.0,
            l_cm: 0.0,
            content: 0.0,
            style: 0.0,
            hist: 0.0,
        };
        let scale = 1.0 / cfg.batch as f64;
        for _ in 0..cfg.batch {
            let (paired, unpaired) = corpus.draw(&mut rng)?;
            let (total, r) = sample_loss(model, &paired, &unpaired, cfg.lambda, cfg.bins)?;
            total.mul_scalar(scale).backward()?;
            acc.total += r.total * scale;
            acc.l_self += r.l_self * scale;
            acc.l_cm += r.l_cm * scale;
            acc.content += r.content * scale;
            acc.style += r.style * scale;
            acc.hist += r.hist * scale;
        }
        optimizer.step(&base_params);
        fc_optimizer.step(&fc_params);
        progress(step, &acc);
        history.push(acc);
    }
    Ok(history)
}

/// Mean |M_c1 - M_c2| and mean |I_1 - I_2| over held-out paired samples.
pub fn content_map_consistency(model: &IrStyleModel, pairs: &[PairedSample]) -> Result<(f64, f64)> {
    let mut map_diff = 0.0;
    let mut img_diff = 0.0;
    for p in pairs {
        let l12 = model.predict_luts(&p.i1, &p.i2)?;
        let l21 = model.predict_luts(&p.i2, &p.i1)?;
        let mc1 = apply_lut(l12.content.as_ref().expect("dual model"), &p.i1)?;
        let mc2 = apply_lut(l21.content.as_ref().expect("dual model"), &p.i2)?;
        map_diff += mc1.mean_abs_diff(&mc2);
        img_diff += p.i1.mean_abs_diff(&p.i2);
    }
    let n = pairs.len() as f64;
    Ok((map_diff / n, img_diff / n))
}

/// Smooth synthetic photographs: blended color gradients with soft blobs.
pub fn synth_toy_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<ImageF> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let base: [f32; 3] = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
            let gx: [f32; 3] = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)];
            let gy: [f32; 3] = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)];
            let blobs: Vec<(f32, f32, f32, [f32; 3])> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.05..0.3),
                        [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                    )
                })
                .collect();
            let mut img = ImageF::new(width, height);
            for y in 0..height {
                let fy = y as f32 / height as f32;
                for x in 0..width {
                    let fx = x as f32 / width as f32;
                    let mut px = [0.0f32; 3];
                    for c in 0..3 {
                        px[c] = base[c] + gx[c] * fx + gy[c] * fy;
                    }
                    for (bx, by, r, col) in &blobs {
                        let d2 = (fx - bx) * (fx - bx) + (fy - by) * (fy - by);
                        let f = (-d2 / (r * r)).exp();
                        for c in 0..3 {
                            px[c] += f * col[c];
                        }
                    }
                    for v in &mut px {
                        *v = v.clamp(0.0, 1.0);
                    }
                    img.set(x, y, px);
                }
            }
            img
        })
        .collect()
}

/// Smooth color filters: per-channel gain/gamma/lift plus a slight
/// cross-channel mix, materialized as 3D LUTs.
pub fn synth_filter_luts(count: usize, size: usize, seed: u64) -> Result<Vec<Lut3d>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let gain: [f32; 3] = [rng.gen_range(0.7..1.3), rng.gen_range(0.7..1.3), rng.gen_range(0.7..1.3)];
        let gamma: [f32; 3] = [rng.gen_range(0.7..1.4), rng.gen_range(0.7..1.4), rng.gen_range(0.7..1.4)];
        let lift: [f32; 3] = [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)];
        let mix = rng.gen_range(0.0..0.15f32);
        let mut lattice = Vec::with_capacity(3 * size * size * size);
        for b in 0..size {
            for g in 0..size {
                for r in 0..size {
                    let u = [
                        r as f32 / (size - 1) as f32,
                        g as f32 / (size - 1) as f32,
                        b as f32 / (size - 1) as f32,
                    ];
                    let lum = (u[0] + u[1] + u[2]) / 3.0;
                    for c in 0..3 {
                        let v = (u[c].max(0.0).powf(gamma[c]) * gain[c] + lift[c]) * (1.0 - mix)
                            + lum * mix;
                        lattice.push(v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        out.push(Lut3d::new(size, lattice)?);
    }
    Ok(out)
}
