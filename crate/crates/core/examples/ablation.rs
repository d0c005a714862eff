//! Dry run of the interaction ablation: identical toy training budgets for
//! the interaction-dual and non-interaction dual variants, then held-out
//! Style Gram comparison under a fixed independent encoder.

use std::time::Instant;

use mrstyle_core::encoder::Encoder;
use mrstyle_core::irstyle::{ArchVariant, IrStyleModel};
use mrstyle_core::metrics::gram_style_loss;
use mrstyle_core::training::{
    random_crop, synth_filter_luts, synth_toy_corpus, train, Corpus, TrainConfig,
};
use mrstyle_core::lut::apply_lut;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eval_gram(model: &IrStyleModel, eval_encoder: &Encoder) -> f64 {
    let images = synth_toy_corpus(12, 320, 320, 300);
    let filters = synth_filter_luts(12, 17, 301).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let mut total = 0.0;
    let n = 24;
    for i in 0..n {
        let content = apply_lut(
            &filters[i % filters.len()],
            &random_crop(&mut rng, &images[i % images.len()]).unwrap(),
        )
        .unwrap();
        let style = apply_lut(
            &filters[(i + 2) % filters.len()],
            &random_crop(&mut rng, &images[(i + 3) % images.len()]).unwrap(),
        )
        .unwrap();
        let out = model.transfer(&content, &style).unwrap().output;
        total += gram_style_loss(&out, &style, eval_encoder).unwrap();
    }
    total / n as f64
}

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);
    let seed: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let cfg = TrainConfig {
        steps,
        batch: 1,
        seed,
        ..TrainConfig::default()
    };
    let corpus = Corpus {
        images: synth_toy_corpus(32, 320, 320, 100),
        filters: synth_filter_luts(50, 17, 101).unwrap(),
    };
    let eval_encoder = Encoder::new(999);
    let mut results = Vec::new();
    for variant in [ArchVariant::InteractionDual, ArchVariant::NonInteractionDual] {
        let model = IrStyleModel::new(variant, cfg.seed);
        let t0 = Instant::now();
        train(&model, &corpus, &cfg, |_, _| {}).unwrap();
        let gram = eval_gram(&model, &eval_encoder);
        println!(
            "{}: held-out style gram {:.6} after {} steps ({:?})",
            variant.name(),
            gram,
            steps,
            t0.elapsed()
        );
        results.push(gram);
    }
    println!(
        "ordering {} (interaction {:.6} vs non-interaction {:.6})",
        if results[0] < results[1] { "HOLDS" } else { "VIOLATED" },
        results[0],
        results[1]
    );
}
