//! 2D cross-correlation with reverse-mode gradients.
//!
//! Implemented as im2col plus a register-blocked matmul; the column buffer
//! is rebuilt per call (a few MB at most at these shapes), which keeps the
//! hot loops dense and lets the compiler vectorize the accumulation.

use crate::nn::tensor::Tensor;

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvDims {
    fn infer(xs: &[usize], ws: &[usize], stride: usize, pad: usize) -> ConvDims {
        assert_eq!(xs.len(), 4, "conv2d input must be [N, C, H, W]");
        assert_eq!(ws.len(), 4, "conv2d weight must be [O, C, kh, kw]");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch: {} vs {}", xs[1], ws[1]);
        assert!(stride >= 1);
        let oh = (xs[2] + 2 * pad - ws[2]) / stride + 1;
        let ow = (xs[3] + 2 * pad - ws[3]) / stride + 1;
        ConvDims {
            n: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            oh,
            ow,
        }
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Valid output-x range for a kernel column, so input x stays in bounds.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = if kx < self.pad {
            (self.pad - kx).div_ceil(self.stride)
        } else {
            0
        };
        if kx > self.w + self.pad - 1 {
            return (0, 0);
        }
        let hi_inclusive = (self.w + self.pad - 1 - kx) / self.stride;
        (lo.min(self.ow), (hi_inclusive + 1).min(self.ow))
    }
}

impl Tensor {
    /// Standard cross-correlation with spatial output `floor((H+2p-k)/s)+1`.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
        let d = ConvDims::infer(&self.shape(), &weight.shape(), stride, pad);
        assert_eq!(bias.shape(), vec![d.cout], "conv2d bias shape mismatch");
        let mut out = vec![0.0; d.n * d.cout * d.out_plane()];
        // keep the forward column buffers for backward_weight when the
        // weight is trainable; the tape frees them after the sweep
        let keep_cols = weight.requires_grad();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        {
            let x = self.data();
            let wt = weight.data();
            let b = bias.data();
            let plane = d.out_plane();
            let rows = d.col_rows();
            let mut col = vec![0.0; rows * plane];
            for n in 0..d.n {
                im2col(&d, &x[n * d.cin * d.h * d.w..], &mut col);
                let o = &mut out[n * d.cout * plane..(n + 1) * d.cout * plane];
                for oc in 0..d.cout {
                    o[oc * plane..(oc + 1) * plane].fill(b[oc]);
                }
                matmul(d.cout, rows, plane, &wt, &col, o);
                if keep_cols {
                    // move the buffer instead of copying it; im2col writes
                    // every element, so the fresh one needs no zeroing pass
                    cols.push(std::mem::replace(&mut col, vec![0.0; rows * plane]));
                }
            }
        }
        let (xt, wtt, bt) = (self.clone(), weight.clone(), bias.clone());
        let shape = [d.n, d.cout, d.oh, d.ow];
        Tensor::new_node(
            out,
            &shape,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g| {
                let d = ConvDims::infer(&xt.shape(), &wtt.shape(), stride, pad);
                let need_x = xt.requires_grad();
                let need_w = wtt.requires_grad();
                if need_x || need_w {
                    let plane = d.out_plane();
                    let rows = d.col_rows();
                    if need_x {
                        let wt = wtt.to_vec();
                        let mut gx = vec![0.0; xt.numel()];
                        let mut gcol = vec![0.0; rows * plane];
                        for n in 0..d.n {
                            gcol.fill(0.0);
                            let gp = &g[n * d.cout * plane..(n + 1) * d.cout * plane];
                            matmul_at_b(rows, d.cout, plane, &wt, gp, &mut gcol);
                            col2im(&d, &gcol, &mut gx[n * d.cin * d.h * d.w..]);
                        }
                        xt.accum_grad_owned(gx);
                    }
                    if need_w {
                        let mut gw = vec![0.0; wtt.numel()];
                        for (n, col) in cols.iter().enumerate() {
                            let gp = &g[n * d.cout * plane..(n + 1) * d.cout * plane];
                            matmul_a_bt(d.cout, plane, rows, gp, col, &mut gw);
                        }
                        wtt.accum_grad_owned(gw);
                    }
                }
                if bt.requires_grad() {
                    let mut gb = vec![0.0; d.cout];
                    let plane = d.out_plane();
                    for n in 0..d.n {
                        for oc in 0..d.cout {
                            let base = (n * d.cout + oc) * plane;
                            gb[oc] += g[base..base + plane].iter().sum::<f64>();
                        }
                    }
                    bt.accum_grad_owned(gb);
                }
            }),
        )
    }
}

/// col[(ic*kh + ky)*kw + kx][oy*ow + ox] = x[ic][oy*s + ky - p][ox*s + kx - p]
fn im2col(d: &ConvDims, x: &[f64], col: &mut [f64]) {
    let plane = d.out_plane();
    let in_plane = d.h * d.w;
    for ic in 0..d.cin {
        let xp = &x[ic * in_plane..(ic + 1) * in_plane];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((ic * d.kh + ky) * d.kw + kx) * plane;
                let (ox0, ox1) = d.ox_range(kx);
                for oy in 0..d.oh {
                    let crow = &mut col[row + oy * d.ow..row + (oy + 1) * d.ow];
                    let iy = oy * d.stride + ky;
                    if iy < d.pad || iy - d.pad >= d.h {
                        crow.fill(0.0);
                        continue;
                    }
                    let iy = iy - d.pad;
                    crow[..ox0].fill(0.0);
                    crow[ox1..].fill(0.0);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let ix0 = ox0 * d.stride + kx - d.pad;
                    if d.stride == 1 {
                        crow[ox0..ox1].copy_from_slice(&xp[iy * d.w + ix0..iy * d.w + ix0 + (ox1 - ox0)]);
                    } else {
                        let xrow = &xp[iy * d.w..(iy + 1) * d.w];
                        for (i, cv) in crow[ox0..ox1].iter_mut().enumerate() {
                            *cv = xrow[ix0 + i * d.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of a column-gradient buffer back to input layout.
fn col2im(d: &ConvDims, col: &[f64], gx: &mut [f64]) {
    let plane = d.out_plane();
    let in_plane = d.h * d.w;
    for ic in 0..d.cin {
        let gxp = &mut gx[ic * in_plane..(ic + 1) * in_plane];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((ic * d.kh + ky) * d.kw + kx) * plane;
                let (ox0, ox1) = d.ox_range(kx);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in 0..d.oh {
                    let iy = oy * d.stride + ky;
                    if iy < d.pad || iy - d.pad >= d.h {
                        continue;
                    }
                    let iy = iy - d.pad;
                    let crow = &col[row + oy * d.ow + ox0..row + oy * d.ow + ox1];
                    let ix0 = ox0 * d.stride + kx - d.pad;
                    if d.stride == 1 {
                        let xrow = &mut gxp[iy * d.w + ix0..iy * d.w + ix0 + (ox1 - ox0)];
                        for (xv, cv) in xrow.iter_mut().zip(crow) {
                            *xv += cv;
                        }
                    } else {
                        let xrow = &mut gxp[iy * d.w..(iy + 1) * d.w];
                        for (i, cv) in crow.iter().enumerate() {
                            xrow[ix0 + i * d.stride] += cv;
                        }
                    }
                }
            }
        }
    }
}

const N_TILE: usize = 512;

/// Core of the two row-major products: c[M,N] += a' * b[K,N] where
/// `get_a(mi, ki)` abstracts whether `a` is stored [M,K] or [K,M].
/// 4x4 register tiles over (rows, K) keep sixteen coefficients live while
/// the inner loop streams four b rows into four c rows.
#[inline(always)]
fn matmul_core(m: usize, k: usize, n: usize, get_a: impl Fn(usize, usize) -> f64, b: &[f64], c: &mut [f64]) {
    for n0 in (0..n).step_by(N_TILE) {
        let n1 = (n0 + N_TILE).min(n);
        let mut mi = 0;
        while mi + 4 <= m {
            let (c01, c23) = c[mi * n..].split_at_mut(2 * n);
            let (c0, c1) = c01.split_at_mut(n);
            let (c2, c3) = c23.split_at_mut(n);
            let c0 = &mut c0[n0..n1];
            let c1 = &mut c1[n0..n1];
            let c2 = &mut c2[n0..n1];
            let c3 = &mut c3[n0..n1];
            let mut ki = 0;
            while ki + 4 <= k {
                let mut av = [[0.0f64; 4]; 4];
                let mut all_zero = true;
                for (r, row) in av.iter_mut().enumerate() {
                    for (q, v) in row.iter_mut().enumerate() {
                        *v = get_a(mi + r, ki + q);
                        all_zero &= *v == 0.0;
                    }
                }
                if all_zero {
                    ki += 4;
                    continue;
                }
                let b0 = &b[ki * n + n0..ki * n + n1];
                let b1 = &b[(ki + 1) * n + n0..(ki + 1) * n + n1];
                let b2 = &b[(ki + 2) * n + n0..(ki + 2) * n + n1];
                let b3 = &b[(ki + 3) * n + n0..(ki + 3) * n + n1];
                for j in 0..n1 - n0 {
                    let (v0, v1, v2, v3) = (b0[j], b1[j], b2[j], b3[j]);
                    c0[j] += av[0][0] * v0 + av[0][1] * v1 + av[0][2] * v2 + av[0][3] * v3;
                    c1[j] += av[1][0] * v0 + av[1][1] * v1 + av[1][2] * v2 + av[1][3] * v3;
                    c2[j] += av[2][0] * v0 + av[2][1] * v1 + av[2][2] * v2 + av[2][3] * v3;
                    c3[j] += av[3][0] * v0 + av[3][1] * v1 + av[3][2] * v2 + av[3][3] * v3;
                }
                ki += 4;
            }
            while ki < k {
                let a0 = get_a(mi, ki);
                let a1 = get_a(mi + 1, ki);
                let a2 = get_a(mi + 2, ki);
                let a3 = get_a(mi + 3, ki);
                if a0 != 0.0 || a1 != 0.0 || a2 != 0.0 || a3 != 0.0 {
                    let br = &b[ki * n + n0..ki * n + n1];
                    for (j, bv) in br.iter().enumerate() {
                        c0[j] += a0 * bv;
                        c1[j] += a1 * bv;
                        c2[j] += a2 * bv;
                        c3[j] += a3 * bv;
                    }
                }
                ki += 1;
            }
            mi += 4;
        }
        while mi < m {
            for ki in 0..k {
                let av = get_a(mi, ki);
                if av == 0.0 {
                    continue;
                }
                let br = &b[ki * n + n0..ki * n + n1];
                let cr = &mut c[mi * n + n0..mi * n + n1];
                for (cv, bv) in cr.iter_mut().zip(br) {
                    *cv += av * bv;
                }
            }
            mi += 1;
        }
    }
}

/// c[M,N] += a[M,K] * b[K,N].
fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    matmul_core(m, k, n, |mi, ki| a[mi * k + ki], b, c);
}

/// c[M,N] += a^T * b where a is [K,M]: c[mi][j] += a[ki][mi] * b[ki][j].
fn matmul_at_b(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    matmul_core(m, k, n, |mi, ki| a[ki * m + mi], b, c);
}

/// c[M,K] += a * b^T where a is [M,N], b is [K,N]: row-by-row dot products,
/// blocked over N so each b block is streamed from memory once and re-read
/// from cache for the remaining a rows.
fn matmul_a_bt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for n0 in (0..n).step_by(N_TILE) {
        let n1 = (n0 + N_TILE).min(n);
        let len = n1 - n0;
        for mi in 0..m {
            let ar = &a[mi * n + n0..mi * n + n1];
            for ki in 0..k {
                let br = &b[ki * n + n0..ki * n + n1];
                // four partial sums keep the FMA chains independent
                let mut acc = [0.0f64; 4];
                let chunks = len / 4;
                for j in 0..chunks {
                    let o = 4 * j;
                    acc[0] += ar[o] * br[o];
                    acc[1] += ar[o + 1] * br[o + 1];
                    acc[2] += ar[o + 2] * br[o + 2];
                    acc[3] += ar[o + 3] * br[o + 3];
                }
                let mut s = acc[0] + acc[1] + acc[2] + acc[3];
                for j in 4 * chunks..len {
                    s += ar[j] * br[j];
                }
                c[mi * k + ki] += s;
            }
        }
    }
}
