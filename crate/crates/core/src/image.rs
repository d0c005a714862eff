//! Float RGB raster with PPM/PNG I/O.
//!
//! Pixels are interleaved RGB `f32` in `[0, 1]`. 8-bit files are decoded by
//! dividing by 255 and encoded by rounding, so decode/encode round-trips
//! 8-bit data exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, length `3 * width * height`.
    pub data: Vec<f32>,
}

impl ImageF {
    pub fn new(width: usize, height: usize) -> Self {
        ImageF { width, height, data: vec![0.0; 3 * width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), 3 * width * height, "pixel data length mismatch");
        ImageF { width, height, data }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i] = px[0];
        self.data[i + 1] = px[1];
        self.data[i + 2] = px[2];
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageF {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut out = ImageF::new(w, h);
        for y in 0..h {
            let src = 3 * ((y0 + y) * self.width + x0);
            let dst = 3 * (y * w);
            out.data[dst..dst + 3 * w].copy_from_slice(&self.data[src..src + 3 * w]);
        }
        out
    }

    /// Bilinear resize with half-pixel centers (align-corners = false).
    pub fn resize_bilinear(&self, out_w: usize, out_h: usize) -> ImageF {
        assert!(out_w >= 1 && out_h >= 1);
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let mut out = ImageF::new(out_w, out_h);
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let mut px = [0.0f32; 3];
                for c in 0..3 {
                    let p00 = self.get(x0, y0)[c] as f64;
                    let p10 = self.get(x1, y0)[c] as f64;
                    let p01 = self.get(x0, y1)[c] as f64;
                    let p11 = self.get(x1, y1)[c] as f64;
                    let top = p00 + (p10 - p00) * tx;
                    let bot = p01 + (p11 - p01) * tx;
                    px[c] = (top + (bot - top) * ty) as f32;
                }
                out.set(ox, oy, px);
            }
        }
        out
    }

    /// Rec. 601 luma, used by SSIM.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> ImageF {
        assert_eq!(bytes.len(), 3 * width * height);
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        ImageF { width, height, data }
    }

    /// Maximum absolute per-channel difference between two images.
    pub fn max_abs_diff(&self, other: &ImageF) -> f32 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn mean_abs_diff(&self, other: &ImageF) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        sum / self.data.len() as f64
    }
}

pub fn write_ppm<W: Write>(img: &ImageF, mut w: W) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.to_bytes())?;
    Ok(())
}

pub fn read_ppm<R: Read>(mut r: R) -> Result<ImageF> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let mut next_token = |buf: &[u8]| -> Result<String> {
        // skip whitespace and comments
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode("unexpected end of PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    let magic = next_token(&buf)?;
    if magic != "P6" {
        return Err(Error::Decode(format!("expected P6 magic, got {magic:?}")));
    }
    let width: usize = next_token(&buf)?
        .parse()
        .map_err(|_| Error::Decode("bad PPM width".into()))?;
    let height: usize = next_token(&buf)?
        .parse()
        .map_err(|_| Error::Decode("bad PPM height".into()))?;
    let maxval: usize = next_token(&buf)?
        .parse()
        .map_err(|_| Error::Decode("bad PPM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Decode(format!("only maxval 255 supported, got {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = 3 * width * height;
    if buf.len() < pos + need {
        return Err(Error::Decode(format!(
            "PPM payload truncated: need {need} bytes, have {}",
            buf.len().saturating_sub(pos)
        )));
    }
    Ok(ImageF::from_bytes(width, height, &buf[pos..pos + need]))
}

/// Loads a PPM or PNG image by extension.
pub fn load_image(path: &Path) -> Result<ImageF> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "ppm" => {
            let f = std::fs::File::open(path)?;
            read_ppm(std::io::BufReader::new(f))
        }
        "png" => {
            let img = image::open(path)
                .map_err(|e| Error::Decode(e.to_string()))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok(ImageF::from_bytes(w, h, img.as_raw()))
        }
        other => Err(Error::Decode(format!("unsupported image extension {other:?}"))),
    }
}

pub fn save_image(img: &ImageF, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "ppm" => {
            let f = std::fs::File::create(path)?;
            write_ppm(img, std::io::BufWriter::new(f))
        }
        "png" => {
            let buf: image::RgbImage = image::ImageBuffer::from_raw(
                img.width as u32,
                img.height as u32,
                img.to_bytes(),
            )
            .expect("buffer size matches dimensions");
            buf.save(path).map_err(|e| Error::Decode(e.to_string()))
        }
        other => Err(Error::Decode(format!("unsupported image extension {other:?}"))),
    }
}
