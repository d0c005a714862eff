//! Scene segmentation and per-scene LUT reuse for video.
//!
//! A clip is segmented wherever the Lab histogram distance between
//! consecutive frames exceeds a threshold; the LUT pair is predicted once
//! per segment from its first frame and applied to every frame in it.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{load_image, save_image, ImageF};
use crate::irstyle::IrStyleModel;
use crate::metrics::lab_histogram_distance;

pub const DEFAULT_SCENE_THRESHOLD: f64 = 0.3;

/// Contiguous frame-index ranges covering [0, N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneSegments {
    pub ranges: Vec<Range<usize>>,
}

impl SceneSegments {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// A new segment starts at frame i when the Lab histogram distance between
/// frames i-1 and i exceeds `threshold`.
pub fn segment_scenes(frames: &[ImageF], threshold: f64) -> Result<SceneSegments> {
    if frames.is_empty() {
        return Err(Error::EmptyClip);
    }
    let mut ranges = Vec::new();
    let mut start = 0usize;
    for i in 1..frames.len() {
        if lab_histogram_distance(&frames[i - 1], &frames[i])? > threshold {
            ranges.push(start..i);
            start = i;
        }
    }
    ranges.push(start..frames.len());
    Ok(SceneSegments { ranges })
}

pub struct VideoTransfer {
    pub frames: Vec<ImageF>,
    pub segments: SceneSegments,
    /// LUT prediction count; equals the segment count by construction.
    pub predictions: usize,
}

/// Stylizes a clip: one LUT-pair prediction per segment (from its first
/// frame), constant-cost application to every frame.
pub fn transfer_video(
    frames: &[ImageF],
    style: &ImageF,
    model: &IrStyleModel,
    threshold: f64,
    threads: usize,
) -> Result<VideoTransfer> {
    let segments = segment_scenes(frames, threshold)?;
    let mut out = Vec::with_capacity(frames.len());
    let mut predictions = 0usize;
    for range in &segments.ranges {
        let luts = model.predict_luts(&frames[range.start], style)?;
        predictions += 1;
        for frame in &frames[range.clone()] {
            let styled = match &luts.content {
                Some(cl) => luts
                    .style
                    .apply_threaded(&cl.apply_threaded(frame, threads)?, threads)?,
                None => luts.style.apply_threaded(frame, threads)?,
            };
            out.push(styled);
        }
    }
    Ok(VideoTransfer {
        frames: out,
        segments,
        predictions,
    })
}

/// Loads `frame_%06d.ppm` (or `.png`) files from a directory, ordered by
/// file name.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<ImageF>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("frame_") && (name.ends_with(".ppm") || name.ends_with(".png"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyClip);
    }
    names.iter().map(|p| load_image(p)).collect()
}

/// Writes frames as `frame_%06d.ppm` into an existing directory.
pub fn write_frame_dir(dir: &Path, frames: &[ImageF]) -> Result<()> {
    for (i, frame) in frames.iter().enumerate() {
        save_image(frame, &dir.join(format!("frame_{i:06}.ppm")))?;
    }
    Ok(())
}
