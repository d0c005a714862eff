//! Finite-difference checks for every differentiable op, against the
//! analytic gradients produced by the tape.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::gradcheck::max_rel_error;
use crate::nn::lut_ops::{clut_materialize, lut_apply};
use crate::nn::ops::{mse, soft_histogram};
use crate::nn::tensor::Tensor;

const TOL: f64 = 1e-3;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::leaf((0..n).map(|_| rng.gen_range(lo..hi)).collect(), shape)
}

#[test]
fn conv2d_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = randn(&mut rng, &[1, 2, 5, 5], -1.0, 1.0);
    let w = randn(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
    let b = randn(&mut rng, &[3], -0.1, 0.1);
    let t = Tensor::zeros(&[1, 3, 3, 3]);
    let err = max_rel_error(&x, || Ok(mse(&x.conv2d(&w, &b, 2, 1), &t)), 1e-3).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn conv2d_weight_and_bias_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = randn(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
    let w = randn(&mut rng, &[2, 2, 3, 3], -0.5, 0.5);
    let b = randn(&mut rng, &[2], -0.1, 0.1);
    let t = Tensor::zeros(&[1, 2, 4, 4]);
    let err_w = max_rel_error(&w, || Ok(mse(&x.conv2d(&w, &b, 1, 1), &t)), 1e-3).unwrap();
    assert!(err_w < TOL, "weight {err_w}");
    let err_b = max_rel_error(&b, || Ok(mse(&x.conv2d(&w, &b, 1, 1), &t)), 1e-3).unwrap();
    assert!(err_b < TOL, "bias {err_b}");
}

#[test]
fn adain_content_and_style_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let c = randn(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
    let s = randn(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
    let t = Tensor::zeros(&[1, 2, 3, 3]);
    let err_c = max_rel_error(&c, || Ok(mse(&c.adain(&s, 1e-5)?, &t)), 1e-4).unwrap();
    assert!(err_c < TOL, "content {err_c}");
    let err_s = max_rel_error(&s, || Ok(mse(&c.adain(&s, 1e-5)?, &t)), 1e-4).unwrap();
    assert!(err_s < TOL, "style {err_s}");
}

#[test]
fn linear_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = randn(&mut rng, &[2, 4], -1.0, 1.0);
    let w = randn(&mut rng, &[3, 4], -0.5, 0.5);
    let b = randn(&mut rng, &[3], -0.1, 0.1);
    let t = Tensor::zeros(&[2, 3]);
    for (p, tag) in [(&x, "x"), (&w, "w"), (&b, "b")] {
        let err = max_rel_error(p, || Ok(mse(&x.linear(&w, &b), &t)), 1e-3).unwrap();
        assert!(err < TOL, "{tag} {err}");
    }
}

#[test]
fn resize_bilinear_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = randn(&mut rng, &[1, 2, 5, 4], -1.0, 1.0);
    let t = Tensor::zeros(&[1, 2, 3, 3]);
    let err = max_rel_error(&x, || Ok(mse(&x.resize_bilinear(3, 3), &t)), 1e-3).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn channel_std_and_gap_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = randn(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
    let t = Tensor::zeros(&[1, 3]);
    let err = max_rel_error(&x, || Ok(mse(&x.channel_std(1e-5), &t)), 1e-4).unwrap();
    assert!(err < TOL, "std {err}");
    let err = max_rel_error(&x, || Ok(mse(&x.channel_mean(), &t)), 1e-3).unwrap();
    assert!(err < TOL, "mean {err}");
}

#[test]
fn soft_histogram_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // keep pixels strictly inside (0, 1); the clamp kills grads at the edges
    let x = randn(&mut rng, &[3, 4, 4], 0.05, 0.95);
    let t = Tensor::zeros(&[3, 8]);
    let err = max_rel_error(&x, || Ok(mse(&soft_histogram(&x, 8)?, &t)), 1e-4).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn clut_materialize_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let size = 3;
    let m = 3 * size * size * size;
    let basis = randn(&mut rng, &[4, m], -0.2, 0.2);
    let w = randn(&mut rng, &[4], -0.3, 0.3);
    let target = Tensor::from_vec((0..m).map(|i| (i % 5) as f64 * 0.2).collect(), &[m]);
    let err = max_rel_error(&w, || Ok(mse(&clut_materialize(&basis, &w, size), &target)), 1e-4).unwrap();
    assert!(err < TOL, "weights {err}");
    let err = max_rel_error(&basis, || Ok(mse(&clut_materialize(&basis, &w, size), &target)), 1e-4).unwrap();
    assert!(err < TOL, "basis {err}");
}

#[test]
fn lut_apply_lattice_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let size = 3;
    let m = 3 * size * size * size;
    let lat = randn(&mut rng, &[m], 0.1, 0.9);
    let img = Tensor::from_vec(
        (0..27).map(|i| 0.08 + 0.9 * ((i * 17 % 27) as f64) / 27.0).collect(),
        &[3, 3, 3],
    );
    let t = Tensor::zeros(&[3, 3, 3]);
    let err = max_rel_error(&lat, || Ok(mse(&lut_apply(&lat, &img, size), &t)), 1e-4).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn lut_apply_image_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let size = 4;
    let m = 3 * size * size * size;
    let lat = randn(&mut rng, &[m], 0.1, 0.9);
    lat.set_requires_grad(false);
    // keep pixels away from cell boundaries where trilinear kinks live
    let d1 = (size - 1) as f64;
    let img = Tensor::leaf(
        (0..27)
            .map(|i| (((i * 17 % 27) as f64 / 27.0) * d1).floor() / d1 + 0.41 / d1)
            .collect(),
        &[3, 3, 3],
    );
    let t = Tensor::zeros(&[3, 3, 3]);
    let err = max_rel_error(&img, || Ok(mse(&lut_apply(&lat, &img, size), &t)), 1e-5).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn concat_and_mul_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = randn(&mut rng, &[1, 2, 2, 2], -1.0, 1.0);
    let b = randn(&mut rng, &[1, 3, 2, 2], -1.0, 1.0);
    let t = Tensor::zeros(&[1, 5, 2, 2]);
    let err = max_rel_error(&a, || Ok(mse(&Tensor::concat_channels(&[a.clone(), b.clone()]), &t)), 1e-3)
        .unwrap();
    assert!(err < TOL, "concat {err}");
    let c = randn(&mut rng, &[4], -1.0, 1.0);
    let d = randn(&mut rng, &[4], -1.0, 1.0);
    let err = max_rel_error(&c, || Ok(c.mul(&d).sum().mul_scalar(0.5)), 1e-3).unwrap();
    assert!(err < TOL, "mul {err}");
}
