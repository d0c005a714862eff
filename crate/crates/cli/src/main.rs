//! Batch front door: transfer, LUT tooling, training, data synthesis,
//! metrics, and video.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mrstyle_core::encoder::image_to_tensor;
use mrstyle_core::image::{load_image, save_image};
use mrstyle_core::irstyle::{ArchVariant, IrStyleModel};
use mrstyle_core::lut::{compose_luts, parse_cube, write_cube, Lut3d};
use mrstyle_core::metrics::{content_ssim, gram_style_loss};
use mrstyle_core::prior::{
    blend_style_features, map_prior_features, read_feature_file, synth_prior_features,
    train_mapper_step, transfer_with_style_features, PriorMapper, Triplet,
};
use mrstyle_core::training::{
    make_paired_sample, synth_filter_luts, synth_toy_corpus, train, Corpus, TrainConfig,
};
use mrstyle_core::video::{read_frame_dir, transfer_video, write_frame_dir};
use mrstyle_core::nn::Adam;

#[derive(Parser)]
#[command(name = "mrstyle", version, about = "LUT-based color style transfer")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for model initialization and data synthesis
    #[arg(long)]
    seed: Option<u64>,

    /// `key = value` config file overriding the training defaults
    #[arg(long)]
    config: Option<PathBuf>,

    /// Worker threads for the LUT apply path
    #[arg(long, env = "MRSTYLE_THREADS", default_value_t = 1)]
    threads: usize,

    /// Predictor architecture: direct, dual, or interaction-dual
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ArchVariant>,
}

fn parse_variant(s: &str) -> Result<ArchVariant, String> {
    ArchVariant::parse(s).map_err(|e| e.to_string())
}

impl Common {
    fn config(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path).with_context(|| format!("reading {path:?}"))?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        Ok(cfg)
    }

    fn model(&self, checkpoint: &Option<PathBuf>) -> anyhow::Result<(IrStyleModel, TrainConfig)> {
        let cfg = self.config()?;
        let model = IrStyleModel::new(cfg.variant, cfg.seed);
        if let Some(path) = checkpoint {
            model.load(path).with_context(|| format!("loading {path:?}"))?;
        }
        Ok((model, cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stylize a content image from a style image and/or prior features
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        content: PathBuf,
        #[arg(long, required_unless_present = "style_features")]
        style: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Model checkpoint (freshly seeded weights when omitted)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Prior feature file replacing (or blended with) the style image
        #[arg(long)]
        style_features: Option<PathBuf>,
        /// Mapper checkpoint for the prior features
        #[arg(long, requires = "style_features")]
        mapper: Option<PathBuf>,
        /// Image whose style blends with the mapped prior features
        #[arg(long, requires = "style_features")]
        blend_image: Option<PathBuf>,
        /// Blend weight on the image features, in [0, 1]
        #[arg(long, default_value_t = 0.5, requires = "blend_image")]
        w: f64,
    },
    /// Apply a .cube LUT to an image
    ApplyLut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lut: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose two .cube LUTs (apply `a`, then `b`)
    ComposeLut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the predicted transfer as a single composed .cube LUT
    DumpLut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a predictor on a synthetic (or on-disk) corpus
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Directory of training images (synthetic corpus when omitted)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Synthetic corpus size
        #[arg(long, default_value_t = 8)]
        corpus_size: usize,
        /// Print losses every N steps (0 = silent)
        #[arg(long, default_value_t = 25)]
        log_every: usize,
    },
    /// Distill prior-feature mapping against a frozen predictor
    TrainMapper {
        #[command(flatten)]
        common: Common,
        /// Frozen predictor checkpoint
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 4)]
        corpus_size: usize,
        #[arg(long, default_value_t = 25)]
        log_every: usize,
    },
    /// Write synthetic filter-pair training images
    SynthPairs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Style Gram loss and Content SSIM for image pairs
    Metrics {
        #[command(flatten)]
        common: Common,
        /// First image of each pair (repeatable)
        #[arg(long, required = true)]
        a: Vec<PathBuf>,
        /// Second image of each pair (repeatable, same count as --a)
        #[arg(long, required = true)]
        b: Vec<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Stylize a frame directory with per-scene LUT reuse
    VideoTransfer {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        style: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = mrstyle_core::video::DEFAULT_SCENE_THRESHOLD)]
        scene_threshold: f64,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn read_cube_file(path: &Path) -> anyhow::Result<Lut3d> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path:?}"))?;
    Ok(parse_cube(&text)?)
}

fn build_corpus(data: &Option<PathBuf>, corpus_size: usize, seed: u64) -> anyhow::Result<Corpus> {
    let images = match data {
        Some(dir) => {
            let mut paths: Vec<_> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("ppm") | Some("png")
                    )
                })
                .collect();
            paths.sort();
            if paths.len() < 2 {
                bail!("need at least two images in {dir:?}");
            }
            paths
                .iter()
                .map(|p| load_image(p))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => synth_toy_corpus(corpus_size, 384, 384, seed.wrapping_add(1)),
    };
    let filters = synth_filter_luts(6, 17, seed.wrapping_add(2))?;
    Ok(Corpus { images, filters })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Command::Transfer {
            common,
            content,
            style,
            out,
            model,
            style_features,
            mapper,
            blend_image,
            w,
        } => {
            let (model, cfg) = common.model(&model)?;
            let content_img = load_image(&content)?;
            let output = match style_features {
                None => {
                    let style_img = load_image(style.as_ref().expect("required by clap"))?;
                    model
                        .transfer_threaded(&content_img, &style_img, common.threads)?
                        .output
                }
                Some(feat_path) => {
                    let file = read_feature_file(&feat_path)?;
                    let pm = PriorMapper::for_encoder_priors(cfg.seed);
                    if let Some(path) = &mapper {
                        pm.load(path).with_context(|| format!("loading {path:?}"))?;
                    }
                    let mapped = map_prior_features(&file, &pm)?;
                    let fs = match &blend_image {
                        Some(img_path) => {
                            let img = load_image(img_path)?;
                            let thumb = img.resize_bilinear(
                                mrstyle_core::encoder::THUMB_SIZE,
                                mrstyle_core::encoder::THUMB_SIZE,
                            );
                            let fi = model.encoder.encode(&image_to_tensor(&thumb))?;
                            blend_style_features(&fi, &mapped, w)?
                        }
                        None => mapped,
                    };
                    transfer_with_style_features(&model, &content_img, &fs, common.threads)?.output
                }
            };
            save_image(&output, &out)?;
        }
        Command::ApplyLut {
            common,
            lut,
            input,
            out,
        } => {
            let lut = read_cube_file(&lut)?;
            let img = load_image(&input)?;
            save_image(&lut.apply_threaded(&img, common.threads)?, &out)?;
        }
        Command::ComposeLut { a, b, out, .. } => {
            let composed = compose_luts(&read_cube_file(&a)?, &read_cube_file(&b)?)?;
            std::fs::write(&out, write_cube(&composed))?;
        }
        Command::DumpLut {
            common,
            content,
            style,
            out,
            model,
        } => {
            let (model, _) = common.model(&model)?;
            let luts = model.predict_luts(&load_image(&content)?, &load_image(&style)?)?;
            let composed = match &luts.content {
                Some(cl) => compose_luts(cl, &luts.style)?,
                None => luts.style,
            };
            std::fs::write(&out, write_cube(&composed))?;
        }
        Command::Train {
            common,
            out,
            steps,
            lr,
            batch,
            data,
            corpus_size,
            log_every,
        } => {
            let mut cfg = common.config()?;
            if let Some(v) = steps {
                cfg.steps = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = batch {
                cfg.batch = v;
            }
            let corpus = build_corpus(&data, corpus_size, cfg.seed)?;
            let model = IrStyleModel::new(cfg.variant, cfg.seed);
            train(&model, &corpus, &cfg, |step, l| {
                if log_every > 0 && (step + 1) % log_every == 0 {
                    println!(
                        "step {:4} total={:.4} pair={:.4} cm={:.4} content={:.4} style={:.4} hist={:.4}",
                        step + 1, l.total, l.l_self, l.l_cm, l.content, l.style, l.hist
                    );
                }
            })?;
            model.save(&out)?;
        }
        Command::TrainMapper {
            common,
            model,
            out,
            steps,
            lr,
            corpus_size,
            log_every,
        } => {
            let mut cfg = common.config()?;
            if let Some(v) = steps {
                cfg.steps = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            let (model, _) = common.model(&Some(model))?;
            model.set_frozen(true);
            let images = synth_toy_corpus(corpus_size.max(2), 256, 256, cfg.seed.wrapping_add(3));
            let mut triplets = Vec::new();
            for i in 0..images.len() {
                let style = &images[(i + 1) % images.len()];
                triplets.push(Triplet {
                    content: images[i].clone(),
                    priors: synth_prior_features(&model, style, None)?,
                    target: model.transfer(&images[i], style)?.output,
                });
            }
            let pm = PriorMapper::for_encoder_priors(cfg.seed.wrapping_add(4));
            let mut opt = Adam::new(&pm.params(), cfg.lr);
            for step in 0..cfg.steps {
                let loss = train_mapper_step(&pm, &triplets[step % triplets.len()], &model, &mut opt)?;
                if log_every > 0 && (step + 1) % log_every == 0 {
                    println!("step {:4} l_teach={loss:.6}", step + 1);
                }
            }
            pm.save(&out)?;
        }
        Command::SynthPairs {
            common,
            out,
            count,
            width,
            height,
        } => {
            use rand::SeedableRng;
            let cfg = common.config()?;
            std::fs::create_dir_all(&out)?;
            let images = synth_toy_corpus(count, width.max(256), height.max(256), cfg.seed);
            let filters = synth_filter_luts(2 * count, 17, cfg.seed.wrapping_add(1))?;
            let mut rng = rand_seed(cfg.seed.wrapping_add(2));
            for (i, img) in images.iter().enumerate() {
                let pair = make_paired_sample(&mut rng, img, &filters[2 * i], &filters[2 * i + 1])?;
                save_image(&pair.i1, &out.join(format!("pair_{i:03}_a.ppm")))?;
                save_image(&pair.i2, &out.join(format!("pair_{i:03}_b.ppm")))?;
            }
            fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
                rand_chacha::ChaCha8Rng::seed_from_u64(seed)
            }
        }
        Command::Metrics { common, a, b, model } => {
            if a.len() != b.len() {
                bail!("--a and --b must be given the same number of times");
            }
            let (model, _) = common.model(&model)?;
            for (pa, pb) in a.iter().zip(&b) {
                let ia = load_image(pa)?;
                let ib = load_image(pb)?;
                let gram = gram_style_loss(&ia, &ib, &model.encoder)?;
                let ssim = content_ssim(&ia, &ib)?;
                println!("style_gram={gram:.6} content_ssim={ssim:.6}");
            }
        }
        Command::VideoTransfer {
            common,
            input,
            style,
            out,
            scene_threshold,
            model,
        } => {
            let (model, _) = common.model(&model)?;
            let frames = read_frame_dir(&input)?;
            let style_img = load_image(&style)?;
            let vt = transfer_video(&frames, &style_img, &model, scene_threshold, common.threads)?;
            std::fs::create_dir_all(&out)?;
            write_frame_dir(&out, &vt.frames)?;
            println!("segments={} predictions={}", vt.segments.len(), vt.predictions);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
