//! Elementwise ops, reductions, and the layers the predictor needs.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected a 4-axis tensor, got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        let data: Vec<f64> = self.data().iter().zip(other.data().iter()).map(|(a, b)| a + b).collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::new_node(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                a.accum_grad(g);
                b.accum_grad(g);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        let data: Vec<f64> = self.data().iter().zip(other.data().iter()).map(|(a, b)| a - b).collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::new_node(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                a.accum_grad(g);
                if b.requires_grad() {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    b.accum_grad_owned(neg);
                }
            }),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "mul shape mismatch");
        let data: Vec<f64> = self.data().iter().zip(other.data().iter()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::new_node(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let ga: Vec<f64> = g.iter().zip(b.data().iter()).map(|(g, b)| g * b).collect();
                    a.accum_grad_owned(ga);
                }
                if b.requires_grad() {
                    let gb: Vec<f64> = g.iter().zip(a.data().iter()).map(|(g, a)| g * a).collect();
                    b.accum_grad_owned(gb);
                }
            }),
        )
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v * s).collect();
        let a = self.clone();
        Tensor::new_node(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let ga: Vec<f64> = g.iter().map(|v| v * s).collect();
                    a.accum_grad_owned(ga);
                }
            }),
        )
    }

    pub fn relu(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v.max(0.0)).collect();
        let a = self.clone();
        Tensor::new_node(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let ga: Vec<f64> =
                        g.iter().zip(a.data().iter()).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                    a.accum_grad_owned(ga);
                }
            }),
        )
    }

    /// Same data, new shape (element count must match).
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            self.numel(),
            shape.iter().product::<usize>(),
            "reshape element count mismatch"
        );
        let a = self.clone();
        Tensor::new_node(
            self.to_vec(),
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                a.accum_grad(g);
            }),
        )
    }

    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let a = self.clone();
        let n = self.numel();
        Tensor::new_node(
            vec![s],
            &[1],
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    a.accum_grad_owned(vec![g[0]; n]);
                }
            }),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().mul_scalar(1.0 / n as f64)
    }

    /// [N, C, H, W] -> [N, C] spatial average.
    pub fn global_avg_pool(&self) -> Tensor {
        let (n, c, h, w) = dims4(&self.shape());
        let hw = h * w;
        let mut out = vec![0.0; n * c];
        {
            let data = self.data();
            for i in 0..n * c {
                out[i] = data[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64;
            }
        }
        let a = self.clone();
        Tensor::new_node(
            out,
            &[n, c],
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let mut ga = vec![0.0; g.len() * hw];
                    for (i, gv) in g.iter().enumerate() {
                        let gv = gv / hw as f64;
                        for v in ga[i * hw..(i + 1) * hw].iter_mut() {
                            *v = gv;
                        }
                    }
                    a.accum_grad_owned(ga);
                }
            }),
        )
    }

    /// Per-channel spatial mean: [N, C, H, W] -> [N, C].
    pub fn channel_mean(&self) -> Tensor {
        self.global_avg_pool()
    }

    /// Per-channel spatial standard deviation sqrt(var + eps): [N, C, H, W] -> [N, C].
    pub fn channel_std(&self, eps: f64) -> Tensor {
        let (n, c, h, w) = dims4(&self.shape());
        let hw = h * w;
        let mut means = vec![0.0; n * c];
        let mut stds = vec![0.0; n * c];
        {
            let data = self.data();
            for i in 0..n * c {
                let plane = &data[i * hw..(i + 1) * hw];
                let m = plane.iter().sum::<f64>() / hw as f64;
                let v = plane.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / hw as f64;
                means[i] = m;
                stds[i] = (v + eps).sqrt();
            }
        }
        let a = self.clone();
        let out = stds.clone();
        Tensor::new_node(
            out,
            &[n, c],
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let data = a.to_vec();
                    let mut ga = vec![0.0; data.len()];
                    for i in 0..g.len() {
                        let scale = g[i] / (hw as f64 * stds[i]);
                        for j in 0..hw {
                            ga[i * hw + j] = scale * (data[i * hw + j] - means[i]);
                        }
                    }
                    a.accum_grad_owned(ga);
                }
            }),
        )
    }

    /// Concatenation along the channel axis of [N, C_i, H, W] tensors.
    pub fn concat_channels(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let (n, _, h, w) = dims4(&parts[0].shape());
        let mut total_c = 0;
        for p in parts {
            let (pn, pc, ph, pw) = dims4(&p.shape());
            assert!(pn == n && ph == h && pw == w, "concat spatial/batch mismatch");
            total_c += pc;
        }
        let hw = h * w;
        let mut data = vec![0.0; n * total_c * hw];
        for b in 0..n {
            let mut off = 0;
            for p in parts {
                let pc = p.shape()[1];
                let src = p.data();
                let s = b * pc * hw;
                let d = b * total_c * hw + off * hw;
                data[d..d + pc * hw].copy_from_slice(&src[s..s + pc * hw]);
                off += pc;
            }
        }
        let owned: Vec<Tensor> = parts.to_vec();
        let channels: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        Tensor::new_node(
            data,
            &[n, total_c, h, w],
            parts.to_vec(),
            Box::new(move |g| {
                for b in 0..n {
                    let mut off = 0;
                    for (p, &pc) in owned.iter().zip(&channels) {
                        if p.requires_grad() {
                            let d = b * total_c * hw + off * hw;
                            let mut gp = vec![0.0; p.numel()];
                            let s = b * pc * hw;
                            gp[s..s + pc * hw].copy_from_slice(&g[d..d + pc * hw]);
                            p.accum_grad_owned(gp);
                        }
                        off += pc;
                    }
                }
            }),
        )
    }

    /// Fully connected layer: x [N, C] * w [O, C] + b [O] -> [N, O].
    pub fn linear(&self, weight: &Tensor, bias: &Tensor) -> Tensor {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "linear input must be [N, C]");
        let (n, c) = (shape[0], shape[1]);
        let wshape = weight.shape();
        assert_eq!(wshape.len(), 2);
        let (o, wc) = (wshape[0], wshape[1]);
        assert_eq!(c, wc, "linear weight in-features mismatch");
        assert_eq!(bias.shape(), vec![o]);
        let mut out = vec![0.0; n * o];
        {
            let x = self.data();
            let w = weight.data();
            let b = bias.data();
            for i in 0..n {
                for j in 0..o {
                    let mut acc = b[j];
                    let xr = &x[i * c..(i + 1) * c];
                    let wr = &w[j * c..(j + 1) * c];
                    for k in 0..c {
                        acc += xr[k] * wr[k];
                    }
                    out[i * o + j] = acc;
                }
            }
        }
        let (xt, wt, bt) = (self.clone(), weight.clone(), bias.clone());
        Tensor::new_node(
            out,
            &[n, o],
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g| {
                if xt.requires_grad() {
                    let w = wt.to_vec();
                    let mut gx = vec![0.0; n * c];
                    for i in 0..n {
                        for j in 0..o {
                            let gv = g[i * o + j];
                            for k in 0..c {
                                gx[i * c + k] += gv * w[j * c + k];
                            }
                        }
                    }
                    xt.accum_grad_owned(gx);
                }
                if wt.requires_grad() {
                    let x = xt.to_vec();
                    let mut gw = vec![0.0; o * c];
                    for i in 0..n {
                        for j in 0..o {
                            let gv = g[i * o + j];
                            for k in 0..c {
                                gw[j * c + k] += gv * x[i * c + k];
                            }
                        }
                    }
                    wt.accum_grad_owned(gw);
                }
                if bt.requires_grad() {
                    let mut gb = vec![0.0; o];
                    for i in 0..n {
                        for j in 0..o {
                            gb[j] += g[i * o + j];
                        }
                    }
                    bt.accum_grad_owned(gb);
                }
            }),
        )
    }

    /// Bilinear resize with half-pixel centers (align-corners = false).
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Tensor {
        assert!(out_h >= 1 && out_w >= 1);
        let (n, c, h, w) = dims4(&self.shape());
        if out_h == h && out_w == w {
            // still a node so gradients flow
            let a = self.clone();
            return Tensor::new_node(
                self.to_vec(),
                &[n, c, h, w],
                vec![self.clone()],
                Box::new(move |g| a.accum_grad(g)),
            );
        }
        let xmap = sample_map(w, out_w);
        let ymap = sample_map(h, out_h);
        let mut out = vec![0.0; n * c * out_h * out_w];
        {
            let data = self.data();
            for p in 0..n * c {
                let src = &data[p * h * w..(p + 1) * h * w];
                let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
                for (oy, &(y0, y1, ty)) in ymap.iter().enumerate() {
                    for (ox, &(x0, x1, tx)) in xmap.iter().enumerate() {
                        let p00 = src[y0 * w + x0];
                        let p10 = src[y0 * w + x1];
                        let p01 = src[y1 * w + x0];
                        let p11 = src[y1 * w + x1];
                        let top = p00 + (p10 - p00) * tx;
                        let bot = p01 + (p11 - p01) * tx;
                        dst[oy * out_w + ox] = top + (bot - top) * ty;
                    }
                }
            }
        }
        let a = self.clone();
        let (xm, ym) = (xmap, ymap);
        Tensor::new_node(
            out,
            &[n, c, out_h, out_w],
            vec![self.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let mut ga = vec![0.0; n * c * h * w];
                    for p in 0..n * c {
                        let dst = &mut ga[p * h * w..(p + 1) * h * w];
                        let gsrc = &g[p * ym.len() * xm.len()..(p + 1) * ym.len() * xm.len()];
                        for (oy, &(y0, y1, ty)) in ym.iter().enumerate() {
                            for (ox, &(x0, x1, tx)) in xm.iter().enumerate() {
                                let gv = gsrc[oy * xm.len() + ox];
                                dst[y0 * w + x0] += gv * (1.0 - tx) * (1.0 - ty);
                                dst[y0 * w + x1] += gv * tx * (1.0 - ty);
                                dst[y1 * w + x0] += gv * (1.0 - tx) * ty;
                                dst[y1 * w + x1] += gv * tx * ty;
                            }
                        }
                    }
                    a.accum_grad_owned(ga);
                }
            }),
        )
    }

    /// Adaptive instance normalization: re-normalizes each content channel to
    /// the style channel's mean and standard deviation.
    pub fn adain(&self, style: &Tensor, eps: f64) -> Result<Tensor> {
        let (n, c, h, w) = dims4(&self.shape());
        let (sn, sc, sh, sw) = dims4(&style.shape());
        if n != sn || c != sc {
            return Err(Error::ShapeMismatch(format!(
                "adain channel/batch mismatch: [{n},{c}] vs [{sn},{sc}]"
            )));
        }
        let hw = h * w;
        let shw = sh * sw;
        let planes = n * c;
        let mut mu_c = vec![0.0; planes];
        let mut inv_c = vec![0.0; planes];
        let mut mu_s = vec![0.0; planes];
        let mut sig_s = vec![0.0; planes];
        let mut out = vec![0.0; planes * hw];
        {
            let x = self.data();
            let y = style.data();
            for p in 0..planes {
                let xp = &x[p * hw..(p + 1) * hw];
                let yp = &y[p * shw..(p + 1) * shw];
                let m = xp.iter().sum::<f64>() / hw as f64;
                let v = xp.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / hw as f64;
                let ms = yp.iter().sum::<f64>() / shw as f64;
                let vs = yp.iter().map(|t| (t - ms) * (t - ms)).sum::<f64>() / shw as f64;
                mu_c[p] = m;
                inv_c[p] = 1.0 / (v + eps).sqrt();
                mu_s[p] = ms;
                sig_s[p] = (vs + eps).sqrt();
                let op = &mut out[p * hw..(p + 1) * hw];
                for (o, t) in op.iter_mut().zip(xp) {
                    *o = sig_s[p] * (t - m) * inv_c[p] + ms;
                }
            }
        }
        let (xt, yt) = (self.clone(), style.clone());
        Ok(Tensor::new_node(
            out,
            &[n, c, h, w],
            vec![self.clone(), style.clone()],
            Box::new(move |g| {
                let x = xt.to_vec();
                let y = yt.to_vec();
                let mut gx = vec![0.0; x.len()];
                let mut gy = vec![0.0; y.len()];
                for p in 0..planes {
                    let xp = &x[p * hw..(p + 1) * hw];
                    let gp = &g[p * hw..(p + 1) * hw];
                    // xhat = (x - mu_c) * inv_c
                    let gsum: f64 = gp.iter().sum();
                    let gdotxhat: f64 = gp
                        .iter()
                        .zip(xp)
                        .map(|(g, t)| g * (t - mu_c[p]) * inv_c[p])
                        .sum();
                    if xt.requires_grad() {
                        let gmean = gsum / hw as f64;
                        let gx_mean = gdotxhat / hw as f64;
                        let gxp = &mut gx[p * hw..(p + 1) * hw];
                        for j in 0..hw {
                            let xhat = (xp[j] - mu_c[p]) * inv_c[p];
                            gxp[j] = sig_s[p] * inv_c[p] * (gp[j] - gmean - xhat * gx_mean);
                        }
                    }
                    if yt.requires_grad() {
                        let yp = &y[p * shw..(p + 1) * shw];
                        let gyp = &mut gy[p * shw..(p + 1) * shw];
                        // d mu_s: gsum / Ns ; d sig_s: gdotxhat * (y - mu_s) / (Ns * sig_s)
                        let a = gsum / shw as f64;
                        let b = gdotxhat / (shw as f64 * sig_s[p]);
                        for j in 0..shw {
                            gyp[j] = a + b * (yp[j] - mu_s[p]);
                        }
                    }
                }
                if xt.requires_grad() {
                    xt.accum_grad_owned(gx);
                }
                if yt.requires_grad() {
                    yt.accum_grad_owned(gy);
                }
            }),
        ))
    }
}

fn sample_map(in_dim: usize, out_dim: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_dim as f64 / out_dim as f64;
    (0..out_dim)
        .map(|o| {
            let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_dim - 1) as f64);
            let i0 = f.floor() as usize;
            let i1 = (i0 + 1).min(in_dim - 1);
            (i0, i1, f - i0 as f64)
        })
        .collect()
}

/// Mean squared error between two same-shape tensors.
pub fn mse(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "mse shape mismatch");
    let n = a.numel();
    let s: f64 = a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    let (at, bt) = (a.clone(), b.clone());
    Tensor::new_node(
        vec![s / n as f64],
        &[1],
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let scale = 2.0 * g[0] / n as f64;
            if at.requires_grad() {
                let ga: Vec<f64> = at
                    .data()
                    .iter()
                    .zip(bt.data().iter())
                    .map(|(x, y)| scale * (x - y))
                    .collect();
                at.accum_grad_owned(ga);
            }
            if bt.requires_grad() {
                let gb: Vec<f64> = at
                    .data()
                    .iter()
                    .zip(bt.data().iter())
                    .map(|(x, y)| -scale * (x - y))
                    .collect();
                bt.accum_grad_owned(gb);
            }
        }),
    )
}

/// Differentiable per-channel soft color histogram with a triangular kernel.
///
/// Input [C, H, W] with values in [0, 1]; output [C, B]. Each pixel spreads
/// unit mass over its two nearest bin centers `b / (B - 1)`, normalized by
/// pixel count so every channel sums to one.
pub fn soft_histogram(x: &Tensor, bins: usize) -> Result<Tensor> {
    if bins < 2 {
        return Err(Error::Format(format!("soft histogram needs at least 2 bins, got {bins}")));
    }
    let shape = x.shape();
    assert_eq!(shape.len(), 3, "soft_histogram input must be [C, H, W]");
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h == 0 || w == 0 {
        return Err(Error::EmptyImage);
    }
    let npix = (h * w) as f64;
    let scale = (bins - 1) as f64;
    let mut out = vec![0.0; c * bins];
    {
        let data = x.data();
        for ch in 0..c {
            let plane = &data[ch * h * w..(ch + 1) * h * w];
            let hist = &mut out[ch * bins..(ch + 1) * bins];
            for &v in plane {
                let t = v.clamp(0.0, 1.0) * scale;
                let i0 = (t.floor() as usize).min(bins - 2);
                let f = t - i0 as f64;
                hist[i0] += (1.0 - f) / npix;
                hist[i0 + 1] += f / npix;
            }
        }
    }
    let xt = x.clone();
    Ok(Tensor::new_node(
        out,
        &[c, bins],
        vec![x.clone()],
        Box::new(move |g| {
            if xt.requires_grad() {
                let data = xt.to_vec();
                let mut gx = vec![0.0; data.len()];
                for ch in 0..c {
                    let gh = &g[ch * bins..(ch + 1) * bins];
                    for j in 0..h * w {
                        let v = data[ch * h * w + j];
                        if !(0.0..=1.0).contains(&v) {
                            continue; // clamped pixels get no gradient
                        }
                        let t = v * scale;
                        let i0 = (t.floor() as usize).min(bins - 2);
                        gx[ch * h * w + j] = (gh[i0 + 1] - gh[i0]) * scale / npix;
                    }
                }
                xt.accum_grad_owned(gx);
            }
        }),
    ))
}
