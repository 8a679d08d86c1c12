//! Frame sequences in and out: binary PPM files, ROI pixel vectors and
//! synthetic renders of a trajectory.
//!
//! A `w × h` region becomes a `3wh` vector in channel-planar order (all red
//! values row-major, then green, then blue), scaled to `[0, 1]`.

mod ppm;
mod render;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use ppm::{encode_ppm, parse_ppm, Frame};
pub use render::{base_colors, render_synthetic_frames, ColorMap};
pub use crate::series::{read_csv_series, write_csv_series};

use crate::linalg::Matrix;
use crate::series::{write_atomic, Layout, OutputSeries};
use crate::{Error, Result};

/// Equally spaced frames of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    frame_interval: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, frame_interval: f64) -> Result<Self> {
        if !(frame_interval > 0.0 && frame_interval.is_finite()) {
            return Err(Error::validation(format!(
                "frame interval must be positive, got {frame_interval}"
            )));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::validation("frame sequence is empty"))?;
        let dims = (first.width(), first.height());
        if let Some(k) = frames.iter().position(|f| (f.width(), f.height()) != dims) {
            return Err(Error::validation(format!(
                "frame {k} is {}x{}, expected {}x{}",
                frames[k].width(),
                frames[k].height(),
                dims.0,
                dims.1
            )));
        }
        Ok(Self {
            frames,
            frame_interval,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    /// `k · frame_interval`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.frame_interval).collect()
    }
}

/// Rectangular pixel region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    /// The whole `w × h` frame.
    pub fn full(w: usize, h: usize) -> Self {
        Self::new(0, 0, w, h)
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::validation("ROI must contain at least one pixel"));
        }
        if self.x0 + self.w > width || self.y0 + self.h > height {
            return Err(Error::validation(format!(
                "ROI {}x{} at ({}, {}) exceeds {width}x{height} frame",
                self.w, self.h, self.x0, self.y0
            )));
        }
        Ok(())
    }
}

/// Channel-planar ROI vectors, one row per frame.
pub fn extract_roi(frames: &FrameSequence, roi: &Roi) -> Result<OutputSeries> {
    roi.check(frames.width(), frames.height())?;
    let block = roi.w * roi.h;
    let mut values = Matrix::zeros(frames.len(), 3 * block);
    for (k, frame) in frames.frames().iter().enumerate() {
        let row = values.row_mut(k);
        for yy in 0..roi.h {
            for xx in 0..roi.w {
                let px = frame.pixel(roi.x0 + xx, roi.y0 + yy);
                let i = yy * roi.w + xx;
                for (c, v) in px.iter().enumerate() {
                    row[c * block + i] = *v as f64 / 255.0;
                }
            }
        }
    }
    OutputSeries::new(frames.times(), values)?.with_layout(Layout::Planar {
        width: roi.w,
        height: roi.h,
    })
}

/// Per-sample mean of each channel block, shape `N × 3`.
pub fn channel_means(series: &OutputSeries) -> Result<Matrix> {
    let Layout::Planar { width, height } = series.layout() else {
        return Err(Error::validation("channel means need a planar-layout series"));
    };
    let block = width * height;
    let mut out = Matrix::zeros(series.len(), 3);
    for (k, row) in series.values().row_iter().enumerate() {
        for c in 0..3 {
            out[(k, c)] = row[c * block..(c + 1) * block].iter().sum::<f64>() / block as f64;
        }
    }
    Ok(out)
}

/// PPM files named by a directory (all `*.ppm` inside) or a pattern with one `*`.
pub fn list_frame_files(pattern: &Path) -> Result<Vec<PathBuf>> {
    let (dir, prefix, suffix) = if pattern.is_dir() {
        (pattern.to_path_buf(), String::new(), ".ppm".to_string())
    } else {
        let name = pattern
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::validation(format!("bad frame pattern {}", pattern.display())))?;
        let parts: Vec<&str> = name.split('*').collect();
        if parts.len() == 1 {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("frame directory {} does not exist", pattern.display()),
            )));
        }
        if parts.len() != 2 {
            return Err(Error::validation(format!(
                "frame pattern {} must be a directory or contain exactly one '*'",
                pattern.display()
            )));
        }
        let dir = match pattern.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        (dir, parts[0].to_string(), parts[1].to_string())
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.len() >= prefix.len() + suffix.len() && n.starts_with(&prefix) && n.ends_with(&suffix))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::validation(format!("no frames match {}", pattern.display())));
    }
    Ok(files)
}

/// Load frames in lexicographic filename order.
pub fn read_ppm_sequence(pattern: &Path, frame_interval: f64) -> Result<FrameSequence> {
    let files = list_frame_files(pattern)?;
    let mut frames = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = std::fs::read(path)?;
        let frame = parse_ppm(&bytes, &path.display().to_string())?;
        if let Some(first) = frames.first() as Option<&Frame> {
            if (frame.width(), frame.height()) != (first.width(), first.height()) {
                return Err(Error::parse(
                    path.display().to_string(),
                    "byte 0",
                    format!(
                        "frame is {}x{}, earlier frames are {}x{}",
                        frame.width(),
                        frame.height(),
                        first.width(),
                        first.height()
                    ),
                ));
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(frames, frame_interval)
}

/// Write `frame_000000.ppm, frame_000001.ppm, ...` into `dir`.
pub fn write_ppm_sequence(frames: &FrameSequence, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    frames
        .frames()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(format!("frame_{k:06}.ppm"));
            write_atomic(&path, &encode_ppm(f))?;
            Ok(path)
        })
        .collect()
}
