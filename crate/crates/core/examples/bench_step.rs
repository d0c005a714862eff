//! Dry run of the toy-training convergence check (32 images, 50 filters,
//! 500 steps) with periodic probe-set evaluation. Mirrors the acceptance
//! setup so convergence can be inspected without the full test suite.

use std::time::Instant;

use mrstyle_core::irstyle::{ArchVariant, IrStyleModel};
use mrstyle_core::training::{
    content_map_consistency, make_paired_sample, sample_loss, synth_filter_luts, synth_toy_corpus,
    Corpus, PairedSample, TrainConfig, UnpairedSample,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn probe_set(corpus: &Corpus, seed: u64, count: usize) -> Vec<(PairedSample, UnpairedSample)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| corpus.draw(&mut rng).unwrap()).collect()
}

fn probe_loss(model: &IrStyleModel, probes: &[(PairedSample, UnpairedSample)], cfg: &TrainConfig) -> f64 {
    probes
        .iter()
        .map(|(p, u)| sample_loss(model, p, u, cfg.lambda, cfg.bins).unwrap().1.total)
        .sum::<f64>()
        / probes.len() as f64
}

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(500);
    let lr: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(TrainConfig::default().lr);
    let cfg = TrainConfig {
        steps,
        batch: 1,
        lr,
        ..TrainConfig::default()
    };
    let corpus = Corpus {
        images: synth_toy_corpus(32, 320, 320, 100),
        filters: synth_filter_luts(50, 17, 101).unwrap(),
    };
    let model = IrStyleModel::new(ArchVariant::InteractionDual, cfg.seed);
    let probes = probe_set(&corpus, 900, 8);
    let start_loss = probe_loss(&model, &probes, &cfg);
    println!("probe loss at init: {start_loss:.4}");
    let t0 = Instant::now();
    mrstyle_core::training::train(&model, &corpus, &cfg, |step, l| {
        if (step + 1) % 25 == 0 {
            println!(
                "step {:4} total={:.4} pair={:.4} cm={:.4} content={:.4} style={:.4} hist={:.4} [{:.1}s]",
                step + 1,
                l.total,
                l.l_self,
                l.l_cm,
                l.content,
                l.style,
                l.hist,
                t0.elapsed().as_secs_f64()
            );
        }
    })
    .unwrap();
    println!("trained {} steps in {:?}", cfg.steps, t0.elapsed());
    let end_loss = probe_loss(&model, &probes, &cfg);
    println!(
        "probe loss after training: {end_loss:.4} (ratio {:.3})",
        end_loss / start_loss
    );

    // held-out consistency set: fresh images and filters
    let held_images = synth_toy_corpus(8, 320, 320, 200);
    let held_filters = synth_filter_luts(8, 17, 201).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pairs: Vec<PairedSample> = (0..16)
        .map(|i| {
            make_paired_sample(
                &mut rng,
                &held_images[i % held_images.len()],
                &held_filters[i % held_filters.len()],
                &held_filters[(i + 3) % held_filters.len()],
            )
            .unwrap()
        })
        .collect();
    let (map_diff, img_diff) = content_map_consistency(&model, &pairs).unwrap();
    println!(
        "content-map consistency: {map_diff:.4} vs image diff {img_diff:.4} (ratio {:.3})",
        map_diff / img_diff
    );
}
