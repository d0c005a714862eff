//! Dense 3D LUT representation and trilinear application.
//!
//! A LUT is a `D x D x D` lattice of RGB output triples, red index fastest.
//! Application is trilinear interpolation over the eight enclosing lattice
//! corners, O(1) per pixel and independent of lattice resolution.
//!
//! Interpolation is computed relative to the identity lattice: the output is
//! the (domain-normalized) input plus the interpolated residual against
//! identity. This is algebraically identical to the plain eight-corner
//! weighted sum but makes an identity LUT a bit-level no-op.

mod clut;
mod cube;

pub use clut::{materialize_clut, ClutBank, LutWeights};
pub use cube::{parse_cube, write_cube};

use crate::error::{Error, Result};
use crate::image::ImageF;

/// Default lattice resolution (common grading standard).
pub const DEFAULT_LUT_SIZE: usize = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct Lut3d {
    size: usize,
    /// `3 * size^3` values in `[0, 1]`, red index fastest.
    lattice: Vec<f32>,
    domain_min: [f32; 3],
    domain_max: [f32; 3],
    /// Identity grid values `i / (size - 1)` rounded to f32.
    grid: Vec<f32>,
}

impl Lut3d {
    pub fn new(size: usize, lattice: Vec<f32>) -> Result<Lut3d> {
        Lut3d::with_domain(size, lattice, [0.0; 3], [1.0; 3])
    }

    pub fn with_domain(
        size: usize,
        lattice: Vec<f32>,
        domain_min: [f32; 3],
        domain_max: [f32; 3],
    ) -> Result<Lut3d> {
        if size < 2 {
            return Err(Error::LutSize(size));
        }
        if lattice.len() != 3 * size * size * size {
            return Err(Error::Format(format!(
                "lattice length {} does not match 3*{size}^3",
                lattice.len()
            )));
        }
        if lattice.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite lattice value".into()));
        }
        for c in 0..3 {
            if !(domain_min[c] < domain_max[c]) {
                return Err(Error::Format(format!(
                    "domain_min must be below domain_max per channel, got {} >= {}",
                    domain_min[c], domain_max[c]
                )));
            }
        }
        let lattice = lattice.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Lut3d {
            size,
            lattice,
            domain_min,
            domain_max,
            grid: identity_grid(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn lattice(&self) -> &[f32] {
        &self.lattice
    }

    pub fn domain_min(&self) -> [f32; 3] {
        self.domain_min
    }

    pub fn domain_max(&self) -> [f32; 3] {
        self.domain_max
    }

    /// Flat entry index for lattice coordinates (red, green, blue).
    #[inline]
    pub fn entry_index(&self, r: usize, g: usize, b: usize) -> usize {
        (b * self.size + g) * self.size + r
    }

    pub fn entry(&self, r: usize, g: usize, b: usize) -> [f32; 3] {
        let n = 3 * self.entry_index(r, g, b);
        [self.lattice[n], self.lattice[n + 1], self.lattice[n + 2]]
    }

    fn default_domain(&self) -> bool {
        self.domain_min == [0.0; 3] && self.domain_max == [1.0; 3]
    }

    /// Trilinear lookup of a single pixel. Out-of-domain input clamps.
    #[inline]
    pub fn lookup(&self, px: [f32; 3]) -> [f32; 3] {
        let d = self.size;
        let mut u = [0.0f64; 3];
        for c in 0..3 {
            let v = if self.default_domain() {
                px[c] as f64
            } else {
                (px[c] as f64 - self.domain_min[c] as f64)
                    / (self.domain_max[c] as f64 - self.domain_min[c] as f64)
            };
            u[c] = v.clamp(0.0, 1.0);
        }
        let scale = (d - 1) as f64;
        let mut i0 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for c in 0..3 {
            let t = u[c] * scale;
            let i = (t.floor() as usize).min(d - 2);
            i0[c] = i;
            frac[c] = t - i as f64;
        }
        let (fr, fg, fb) = (frac[0], frac[1], frac[2]);
        let mut out = [0.0f64; 3];
        for corner in 0..8usize {
            let (dr, dg, db) = (corner & 1, (corner >> 1) & 1, corner >> 2);
            let w = (if dr == 1 { fr } else { 1.0 - fr })
                * (if dg == 1 { fg } else { 1.0 - fg })
                * (if db == 1 { fb } else { 1.0 - fb });
            let (ri, gi, bi) = (i0[0] + dr, i0[1] + dg, i0[2] + db);
            let n = 3 * self.entry_index(ri, gi, bi);
            out[0] += w * (self.lattice[n] as f64 - self.grid[ri] as f64);
            out[1] += w * (self.lattice[n + 1] as f64 - self.grid[gi] as f64);
            out[2] += w * (self.lattice[n + 2] as f64 - self.grid[bi] as f64);
        }
        [
            (u[0] + out[0]).clamp(0.0, 1.0) as f32,
            (u[1] + out[1]).clamp(0.0, 1.0) as f32,
            (u[2] + out[2]).clamp(0.0, 1.0) as f32,
        ]
    }

    /// Applies the LUT to an image. NaN pixels are an error; out-of-domain
    /// pixels clamp to the domain before lookup.
    pub fn apply(&self, img: &ImageF) -> Result<ImageF> {
        self.apply_threaded(img, 1)
    }

    pub fn apply_threaded(&self, img: &ImageF, threads: usize) -> Result<ImageF> {
        let mut out = vec![0.0f32; img.data.len()];
        self.apply_into(img, &mut out, threads)?;
        Ok(ImageF::from_data(img.width, img.height, out))
    }

    /// Applies into a caller-provided buffer without allocating. Results are
    /// bit-identical for any thread count.
    pub fn apply_into(&self, img: &ImageF, out: &mut [f32], threads: usize) -> Result<()> {
        if img.is_empty() {
            return Err(Error::EmptyImage);
        }
        assert_eq!(out.len(), img.data.len(), "output buffer length mismatch");
        let threads = threads.max(1);
        if threads == 1 || img.height < 2 {
            return self.apply_rows(&img.data, out);
        }
        let row_len = 3 * img.width;
        let rows_per = img.height.div_ceil(threads);
        let chunk = rows_per * row_len;
        let results: Vec<Result<()>> = std::thread::scope(|s| {
            let handles: Vec<_> = img
                .data
                .chunks(chunk)
                .zip(out.chunks_mut(chunk))
                .map(|(src, dst)| s.spawn(move || self.apply_rows(src, dst)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            r?;
        }
        Ok(())
    }

    fn apply_rows(&self, src: &[f32], dst: &mut [f32]) -> Result<()> {
        let d = self.size;
        let scale = (d - 1) as f32;
        let lat = &self.lattice[..];
        let grid = &self.grid[..];
        let stride_g = 3 * d;
        let stride_b = 3 * d * d;
        let default_domain = self.default_domain();
        let dmin = self.domain_min;
        let dinv = [
            1.0 / (self.domain_max[0] - dmin[0]),
            1.0 / (self.domain_max[1] - dmin[1]),
            1.0 / (self.domain_max[2] - dmin[2]),
        ];
        for (px, q) in src.chunks_exact(3).zip(dst.chunks_exact_mut(3)) {
            if px[0].is_nan() || px[1].is_nan() || px[2].is_nan() {
                return Err(Error::NanPixel);
            }
            let (u0, u1, u2) = if default_domain {
                (
                    px[0].clamp(0.0, 1.0),
                    px[1].clamp(0.0, 1.0),
                    px[2].clamp(0.0, 1.0),
                )
            } else {
                (
                    ((px[0] - dmin[0]) * dinv[0]).clamp(0.0, 1.0),
                    ((px[1] - dmin[1]) * dinv[1]).clamp(0.0, 1.0),
                    ((px[2] - dmin[2]) * dinv[2]).clamp(0.0, 1.0),
                )
            };
            let t0 = u0 * scale;
            let t1 = u1 * scale;
            let t2 = u2 * scale;
            // t >= 0, so the cast truncation equals floor
            let i0 = (t0 as usize).min(d - 2);
            let i1 = (t1 as usize).min(d - 2);
            let i2 = (t2 as usize).min(d - 2);
            let f0 = t0 - i0 as f32;
            let f1 = t1 - i1 as f32;
            let f2 = t2 - i2 as f32;
            let e0 = 1.0 - f0;
            let e1 = 1.0 - f1;
            let e2 = 1.0 - f2;
            let g00 = grid[i0];
            let g01 = grid[i0 + 1];
            let g10 = grid[i1];
            let g11 = grid[i1 + 1];
            let g20 = grid[i2];
            let g21 = grid[i2 + 1];
            let base = stride_b * i2 + stride_g * i1 + 3 * i0;
            let mut o0 = 0.0f32;
            let mut o1 = 0.0f32;
            let mut o2 = 0.0f32;
            // four (green, blue) corners; the two red corners are the
            // adjacent lattice triples at p and p + 3. The indices are in
            // range by construction: i* <= d - 2, so p + 6 <= 3 * d^3.
            debug_assert!(base + stride_g + stride_b + 6 <= lat.len());
            let mut corner = |p: usize, w: f32, gg: f32, gb: f32| {
                let c = unsafe { lat.get_unchecked(p..p + 6) };
                o0 += w * (e0 * (c[0] - g00) + f0 * (c[3] - g01));
                o1 += w * (e0 * (c[1] - gg) + f0 * (c[4] - gg));
                o2 += w * (e0 * (c[2] - gb) + f0 * (c[5] - gb));
            };
            corner(base, e1 * e2, g10, g20);
            corner(base + stride_g, f1 * e2, g11, g20);
            corner(base + stride_b, e1 * f2, g10, g21);
            corner(base + stride_g + stride_b, f1 * f2, g11, g21);
            q[0] = (u0 + o0).clamp(0.0, 1.0);
            q[1] = (u1 + o1).clamp(0.0, 1.0);
            q[2] = (u2 + o2).clamp(0.0, 1.0);
        }
        Ok(())
    }
}

fn identity_grid(size: usize) -> Vec<f32> {
    (0..size).map(|i| i as f32 / (size - 1) as f32).collect()
}

/// Identity LUT: lattice entry (i, j, k) maps to (i, j, k) / (size - 1).
pub fn identity_lut(size: usize) -> Result<Lut3d> {
    if size < 2 {
        return Err(Error::LutSize(size));
    }
    let grid = identity_grid(size);
    let mut lattice = Vec::with_capacity(3 * size * size * size);
    for b in 0..size {
        for g in 0..size {
            for r in 0..size {
                lattice.push(grid[r]);
                lattice.push(grid[g]);
                lattice.push(grid[b]);
            }
        }
    }
    Lut3d::new(size, lattice)
}

/// See [`Lut3d::apply`].
pub fn apply_lut(lut: &Lut3d, img: &ImageF) -> Result<ImageF> {
    lut.apply(img)
}

/// Composes two LUTs: the result of `compose_luts(a, b)` evaluated at a
/// lattice point of `a` equals `b` applied to `a`'s entry there.
pub fn compose_luts(first: &Lut3d, second: &Lut3d) -> Result<Lut3d> {
    if first.size != second.size {
        return Err(Error::LutSizeMismatch(first.size, second.size));
    }
    let mut lattice = Vec::with_capacity(first.lattice.len());
    for entry in first.lattice.chunks_exact(3) {
        let o = second.lookup([entry[0], entry[1], entry[2]]);
        lattice.extend_from_slice(&o);
    }
    Lut3d::with_domain(first.size, lattice, first.domain_min, first.domain_max)
}

#[cfg(test)]
mod tests;
