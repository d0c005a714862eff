//! Evaluation metrics: Style Gram loss, Content SSIM, and the Lab
//! histogram distance used for scene segmentation.

use crate::encoder::{image_to_tensor, Encoder, THUMB_SIZE};
use crate::error::{Error, Result};
use crate::image::ImageF;

/// Gram matrix G = F * F^T / (C * H * W) of a planar [C, H*W] feature map,
/// returned row-major [C, C].
pub fn gram_matrix(feat: &[f64], channels: usize, spatial: usize) -> Vec<f64> {
    assert_eq!(feat.len(), channels * spatial);
    let norm = (channels * spatial) as f64;
    let mut g = vec![0.0; channels * channels];
    for i in 0..channels {
        for j in i..channels {
            let a = &feat[i * spatial..(i + 1) * spatial];
            let b = &feat[j * spatial..(j + 1) * spatial];
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            g[i * channels + j] = dot / norm;
            g[j * channels + i] = dot / norm;
        }
    }
    g
}

fn thumb(img: &ImageF) -> ImageF {
    if img.width == THUMB_SIZE && img.height == THUMB_SIZE {
        img.clone()
    } else {
        img.resize_bilinear(THUMB_SIZE, THUMB_SIZE)
    }
}

/// Style similarity: sum over pyramid levels of the MSE between the Gram
/// matrices of the two images' features.
pub fn gram_style_loss(a: &ImageF, b: &ImageF, encoder: &Encoder) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyImage);
    }
    let fa = encoder.encode(&image_to_tensor(&thumb(a)))?;
    let fb = encoder.encode(&image_to_tensor(&thumb(b)))?;
    let mut total = 0.0;
    for (la, lb) in fa.levels.iter().zip(&fb.levels) {
        let shape = la.shape();
        let (c, spatial) = (shape[1], shape[2] * shape[3]);
        let ga = gram_matrix(&la.data(), c, spatial);
        let gb = gram_matrix(&lb.data(), c, spatial);
        let mse: f64 = ga
            .iter()
            .zip(&gb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / ga.len() as f64;
        total += mse;
    }
    Ok(total)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 11x11 Gaussian window, sigma 1.5.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as i64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

fn luma_plane(img: &ImageF) -> Vec<f64> {
    (0..img.width * img.height)
        .map(|p| {
            0.299 * img.data[3 * p] as f64
                + 0.587 * img.data[3 * p + 1] as f64
                + 0.114 * img.data[3 * p + 2] as f64
        })
        .collect()
}

/// Content similarity: mean SSIM over Gaussian windows on [0, 1] luma.
/// Windows are fully interior ("valid"), so both dims must be >= 11.
pub fn content_ssim(a: &ImageF, b: &ImageF) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch(format!(
            "ssim: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::UndersizedSource {
            width: a.width,
            height: a.height,
            need: SSIM_WINDOW,
        });
    }
    let (w, h) = (a.width, a.height);
    let la = luma_plane(a);
    let lb = luma_plane(b);
    let win = ssim_window();
    let mut sum = 0.0;
    let mut count = 0usize;
    for oy in 0..=h - SSIM_WINDOW {
        for ox in 0..=w - SSIM_WINDOW {
            let (mut mu1, mut mu2) = (0.0, 0.0);
            let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                let row = (oy + ky) * w + ox;
                let wrow = ky * SSIM_WINDOW;
                for kx in 0..SSIM_WINDOW {
                    let g = win[wrow + kx];
                    let x = la[row + kx];
                    let y = lb[row + kx];
                    mu1 += g * x;
                    mu2 += g * y;
                    xx += g * x * x;
                    yy += g * y * y;
                    xy += g * x * y;
                }
            }
            let s1 = xx - mu1 * mu1;
            let s2 = yy - mu2 * mu2;
            let s12 = xy - mu1 * mu2;
            sum += ((2.0 * mu1 * mu2 + SSIM_C1) * (2.0 * s12 + SSIM_C2))
                / ((mu1 * mu1 + mu2 * mu2 + SSIM_C1) * (s1 + s2 + SSIM_C2));
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

pub const LAB_BINS: usize = 32;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in [0, 1] -> CIELAB under D65.
pub fn rgb_to_lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let (rl, gl, bl) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    let f = |t: f64| {
        let d = 6.0 / 29.0;
        if t > d * d * d {
            t.cbrt()
        } else {
            t / (3.0 * d * d) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

const LAB_RANGES: [(f64, f64); 3] = [(0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0)];

/// Normalized 32-bin histograms of L, a, b.
pub fn lab_histograms(img: &ImageF) -> [Vec<f64>; 3] {
    let mut hists = [
        vec![0.0; LAB_BINS],
        vec![0.0; LAB_BINS],
        vec![0.0; LAB_BINS],
    ];
    let npix = img.width * img.height;
    for p in 0..npix {
        let (l, a, b) = rgb_to_lab(
            img.data[3 * p] as f64,
            img.data[3 * p + 1] as f64,
            img.data[3 * p + 2] as f64,
        );
        for (ch, v) in [l, a, b].into_iter().enumerate() {
            let (lo, hi) = LAB_RANGES[ch];
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let bin = ((t * LAB_BINS as f64) as usize).min(LAB_BINS - 1);
            hists[ch][bin] += 1.0;
        }
    }
    for h in &mut hists {
        h.iter_mut().for_each(|v| *v /= npix as f64);
    }
    hists
}

/// Half the L1 distance between normalized Lab histograms, averaged over
/// the three channels; 0 for identical frames, at most 1.
pub fn lab_histogram_distance(a: &ImageF, b: &ImageF) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyImage);
    }
    let ha = lab_histograms(a);
    let hb = lab_histograms(b);
    let mut total = 0.0;
    for ch in 0..3 {
        let d: f64 = ha[ch].iter().zip(&hb[ch]).map(|(x, y)| (x - y).abs()).sum();
        total += 0.5 * d;
    }
    Ok(total / 3.0)
}
