//! Differentiable LUT materialization and trilinear application for the
//! training graph. The inference path lives in `crate::lut`; this mirror
//! exists so gradients can flow into LUT weights, basis tables, and through
//! the content map.

use crate::nn::tensor::Tensor;

/// `clamp(identity + sum_k w_k * basis_k, 0, 1)` over a flat `3*D^3` lattice.
///
/// `basis` is `[K, 3*D^3]`, `weights` is `[K]`; the output is `[3*D^3]`.
pub fn clut_materialize(basis: &Tensor, weights: &Tensor, size: usize) -> Tensor {
    let bs = basis.shape();
    assert_eq!(bs.len(), 2);
    let (k, m) = (bs[0], bs[1]);
    assert_eq!(m, 3 * size * size * size, "basis entry count mismatch");
    assert_eq!(weights.shape(), vec![k], "weight count mismatch");
    let identity = identity_lattice(size);
    let mut pre = identity.clone();
    {
        let b = basis.data();
        let w = weights.data();
        for kk in 0..k {
            let wk = w[kk];
            if wk == 0.0 {
                continue;
            }
            let row = &b[kk * m..(kk + 1) * m];
            for (dst, src) in pre.iter_mut().zip(row) {
                *dst += wk * src;
            }
        }
    }
    let out: Vec<f64> = pre.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let (bt, wt) = (basis.clone(), weights.clone());
    Tensor::new_node(
        out,
        &[m],
        vec![basis.clone(), weights.clone()],
        Box::new(move |g| {
            // pass-through where the pre-clamp value is inside [0, 1]
            let masked: Vec<f64> = g
                .iter()
                .zip(&pre)
                .map(|(g, p)| if (0.0..=1.0).contains(p) { *g } else { 0.0 })
                .collect();
            if wt.requires_grad() {
                let b = bt.to_vec();
                let mut gw = vec![0.0; k];
                for kk in 0..k {
                    let row = &b[kk * m..(kk + 1) * m];
                    gw[kk] = row.iter().zip(&masked).map(|(b, g)| b * g).sum();
                }
                wt.accum_grad_owned(gw);
            }
            if bt.requires_grad() {
                let w = wt.to_vec();
                let mut gb = vec![0.0; k * m];
                for kk in 0..k {
                    let wk = w[kk];
                    if wk == 0.0 {
                        continue;
                    }
                    for (dst, g) in gb[kk * m..(kk + 1) * m].iter_mut().zip(&masked) {
                        *dst = wk * g;
                    }
                }
                bt.accum_grad_owned(gb);
            }
        }),
    )
}

pub fn identity_lattice(size: usize) -> Vec<f64> {
    let mut id = Vec::with_capacity(3 * size * size * size);
    for b in 0..size {
        for g in 0..size {
            for r in 0..size {
                id.push(r as f64 / (size - 1) as f64);
                id.push(g as f64 / (size - 1) as f64);
                id.push(b as f64 / (size - 1) as f64);
            }
        }
    }
    id
}

#[inline]
fn cell(v: f64, size: usize) -> (usize, f64) {
    let t = v.clamp(0.0, 1.0) * (size - 1) as f64;
    let i = (t.floor() as usize).min(size - 2);
    (i, t - i as f64)
}

/// Trilinear application of a flat lattice to an image tensor [C, H, W]
/// (C = 3), output clamped to [0, 1]. Differentiable in both the lattice
/// and the image.
pub fn lut_apply(lattice: &Tensor, image: &Tensor, size: usize) -> Tensor {
    let m = 3 * size * size * size;
    assert_eq!(lattice.shape(), vec![m], "lattice shape mismatch");
    let shape = image.shape();
    assert_eq!(shape.len(), 3, "image must be [3, H, W]");
    assert_eq!(shape[0], 3, "image must have 3 channels");
    let (h, w) = (shape[1], shape[2]);
    let npix = h * w;
    let d = size;
    let mut raw = vec![0.0; 3 * npix];
    {
        let lat = lattice.data();
        let img = image.data();
        for p in 0..npix {
            let px = [img[p], img[npix + p], img[2 * npix + p]];
            let (ir, fr) = cell(px[0], d);
            let (ig, fg) = cell(px[1], d);
            let (ib, fb) = cell(px[2], d);
            let mut out = [0.0f64; 3];
            for corner in 0..8usize {
                let (dr, dg, db) = (corner & 1, (corner >> 1) & 1, corner >> 2);
                let wgt = (if dr == 1 { fr } else { 1.0 - fr })
                    * (if dg == 1 { fg } else { 1.0 - fg })
                    * (if db == 1 { fb } else { 1.0 - fb });
                let n = 3 * (((ib + db) * d + ig + dg) * d + ir + dr);
                out[0] += wgt * lat[n];
                out[1] += wgt * lat[n + 1];
                out[2] += wgt * lat[n + 2];
            }
            raw[p] = out[0];
            raw[npix + p] = out[1];
            raw[2 * npix + p] = out[2];
        }
    }
    let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let (lt, it) = (lattice.clone(), image.clone());
    Tensor::new_node(
        clamped,
        &[3, h, w],
        vec![lattice.clone(), image.clone()],
        Box::new(move |g| {
            let lat = lt.to_vec();
            let img = it.to_vec();
            let lat_wants = lt.requires_grad();
            let img_wants = it.requires_grad();
            let mut glat = vec![0.0; lat.len()];
            let mut gimg = vec![0.0; img.len()];
            let scale = (d - 1) as f64;
            for p in 0..npix {
                let px = [img[p], img[npix + p], img[2 * npix + p]];
                let (ir, fr) = cell(px[0], d);
                let (ig, fg) = cell(px[1], d);
                let (ib, fb) = cell(px[2], d);
                let gout = [
                    if (0.0..=1.0).contains(&raw[p]) { g[p] } else { 0.0 },
                    if (0.0..=1.0).contains(&raw[npix + p]) { g[npix + p] } else { 0.0 },
                    if (0.0..=1.0).contains(&raw[2 * npix + p]) { g[2 * npix + p] } else { 0.0 },
                ];
                let wr = [1.0 - fr, fr];
                let wg = [1.0 - fg, fg];
                let wb = [1.0 - fb, fb];
                let mut dudr = 0.0;
                let mut dudg = 0.0;
                let mut dudb = 0.0;
                for corner in 0..8usize {
                    let (dr, dg, db) = (corner & 1, (corner >> 1) & 1, corner >> 2);
                    let n = 3 * (((ib + db) * d + ig + dg) * d + ir + dr);
                    let wgt = wr[dr] * wg[dg] * wb[db];
                    if lat_wants {
                        glat[n] += wgt * gout[0];
                        glat[n + 1] += wgt * gout[1];
                        glat[n + 2] += wgt * gout[2];
                    }
                    if img_wants {
                        // d weight / d coordinate, sign by corner parity
                        let sr = if dr == 1 { 1.0 } else { -1.0 };
                        let sg = if dg == 1 { 1.0 } else { -1.0 };
                        let sb = if db == 1 { 1.0 } else { -1.0 };
                        let gl = gout[0] * lat[n] + gout[1] * lat[n + 1] + gout[2] * lat[n + 2];
                        dudr += sr * wg[dg] * wb[db] * gl;
                        dudg += sg * wr[dr] * wb[db] * gl;
                        dudb += sb * wr[dr] * wg[dg] * gl;
                    }
                }
                if img_wants {
                    // no gradient through the input clamp when out of range
                    let in_range = |v: f64| (0.0..=1.0).contains(&v);
                    gimg[p] = if in_range(px[0]) { dudr * scale } else { 0.0 };
                    gimg[npix + p] = if in_range(px[1]) { dudg * scale } else { 0.0 };
                    gimg[2 * npix + p] = if in_range(px[2]) { dudb * scale } else { 0.0 };
                }
            }
            if lat_wants {
                lt.accum_grad_owned(glat);
            }
            if img_wants {
                it.accum_grad_owned(gimg);
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn materialize_zero_weights_is_identity() {
        let size = 4;
        let m = 3 * size * size * size;
        let basis = Tensor::from_vec((0..2 * m).map(|i| ((i % 7) as f64 - 3.0) * 0.1).collect(), &[2, m]);
        let w = Tensor::zeros(&[2]);
        let lat = clut_materialize(&basis, &w, size);
        assert_eq!(lat.to_vec(), identity_lattice(size));
    }

    #[test]
    fn apply_identity_lattice_is_noop() {
        let size = 5;
        let lat = Tensor::from_vec(identity_lattice(size), &[3 * size * size * size]);
        let img = Tensor::from_vec(
            (0..27).map(|i| ((i * 13 % 27) as f64) / 26.0).collect(),
            &[3, 3, 3],
        );
        let out = lut_apply(&lat, &img, size);
        for (a, b) in out.data().iter().zip(img.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_matches_inference_path() {
        use crate::image::ImageF;
        use crate::lut::Lut3d;
        let size = 4;
        let m = 3 * size * size * size;
        let lat_vals: Vec<f64> = (0..m).map(|i| ((i * 31 % 101) as f64) / 100.0).collect();
        let lat = Tensor::from_vec(lat_vals.clone(), &[m]);
        let pix: Vec<f64> = (0..12).map(|i| ((i * 7 % 12) as f64) / 11.0).collect();
        let img = Tensor::from_vec(pix.clone(), &[3, 2, 2]);
        let out = lut_apply(&lat, &img, size);
        // same application through the f32 inference path
        let lut = Lut3d::new(size, lat_vals.iter().map(|&v| v as f32).collect()).unwrap();
        let mut interleaved = vec![0.0f32; 12];
        for p in 0..4 {
            for c in 0..3 {
                interleaved[3 * p + c] = pix[c * 4 + p] as f32;
            }
        }
        let res = lut.apply(&ImageF::from_data(2, 2, interleaved)).unwrap();
        let od = out.to_vec();
        for p in 0..4 {
            for c in 0..3 {
                let a = od[c * 4 + p];
                let b = res.data[3 * p + c] as f64;
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }
}
