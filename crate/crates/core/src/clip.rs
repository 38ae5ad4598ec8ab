//! Ordered frame sequences with labels, provenance, and on-disk layout.
//!
//! A clip directory holds zero-padded-numbered PGM frames plus a
//! `manifest.json` with `{fps, label, frame_files, bit_depth}`. CA clips are
//! stored as 16-bit PGM to preserve dynamic range after normalization.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::pgm::{self, BitDepth};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: u32,
    pub name: String,
}

/// Per-transition ground-truth motion: frame i maps to frame i+1 by a
/// translation (dx, dy), rotation dtheta, and scale factor dscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionStep {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dscale: f64,
}

impl MotionStep {
    pub fn identity() -> Self {
        Self { dx: 0.0, dy: 0.0, dtheta: 0.0, dscale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    /// Produced by the synthetic generator.
    Generated { class: String, seed: u64, speed: f64, steps: Vec<MotionStep> },
    /// Loaded from an external source.
    Loaded { path: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub label: Option<Label>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    fps: f64,
    label: Option<Label>,
    frame_files: Vec<String>,
    bit_depth: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl Clip {
    /// Build a clip from frames, enforcing at least 2 frames of uniform size.
    pub fn from_frames(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let dims = frames[0].dims();
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.height(),
                    f.width(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(Self { frames, fps, label: None, provenance: None })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    /// A new clip holding frames `[start, start + count)`.
    pub fn window(&self, start: usize, count: usize) -> Result<Clip> {
        if start + count > self.len() {
            return Err(Error::ClipTooShort { needed: start + count, actual: self.len() });
        }
        Ok(Clip {
            frames: self.frames[start..start + count].to_vec(),
            fps: self.fps,
            label: self.label.clone(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn reversed(&self) -> Clip {
        let mut frames = self.frames.clone();
        frames.reverse();
        Clip { frames, ..self.clone() }
    }

    /// Apply a frame transform to every frame.
    pub fn map_frames(&self, f: impl Fn(&Frame) -> Result<Frame>) -> Result<Clip> {
        let frames: Result<Vec<Frame>> = self.frames.iter().map(f).collect();
        Ok(Clip { frames: frames?, ..self.clone() })
    }
}

/// Save a clip as numbered PGM frames plus `manifest.json`.
pub fn save_clip_dir(clip: &Clip, dir: &Path, depth: BitDepth) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut frame_files = Vec::with_capacity(clip.len());
    for (i, frame) in clip.frames.iter().enumerate() {
        let name = format!("frame_{i:05}.pgm");
        pgm::write_pgm(&dir.join(&name), &frame.pixels, depth)?;
        frame_files.push(name);
    }
    let manifest = Manifest {
        fps: clip.fps,
        label: clip.label.clone(),
        frame_files,
        bit_depth: depth.bits(),
        provenance: clip.provenance.clone(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Load a clip directory written by [`save_clip_dir`].
pub fn load_clip_dir(dir: &Path) -> Result<Clip> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let expect_depth = match manifest.bit_depth {
        8 => BitDepth::Eight,
        16 => BitDepth::Sixteen,
        other => {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: format!("unsupported bit depth {other}"),
            })
        }
    };
    let mut frames = Vec::with_capacity(manifest.frame_files.len());
    let mut dims = None;
    for name in &manifest.frame_files {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: format!("manifest references missing frame {name}"),
            });
        }
        let (pixels, depth) = pgm::read_pgm(&path)?;
        if depth != expect_depth {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!(
                    "bit depth {} does not match manifest {}",
                    depth.bits(),
                    manifest.bit_depth
                ),
            });
        }
        match dims {
            None => dims = Some(pixels.dim()),
            Some(d) if d != pixels.dim() => {
                return Err(Error::DimensionMismatch(format!(
                    "frame {name} is {}x{}, expected {}x{}",
                    pixels.dim().0,
                    pixels.dim().1,
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        frames.push(Frame::new(pixels)?);
    }
    let mut clip = Clip::from_frames(frames, manifest.fps)?;
    clip.label = manifest.label;
    clip.provenance = manifest.provenance.or_else(|| {
        Some(Provenance::Loaded { path: dir.display().to_string() })
    });
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_clip() -> Clip {
        let frames = (0..3)
            .map(|k| {
                Frame::from_fn(12, 10, |r, c| ((r * 10 + c + k * 7) % 31) as f64 / 30.0).unwrap()
            })
            .collect();
        Clip::from_frames(frames, 24.0)
            .unwrap()
            .with_label(Label { id: 2, name: "demo".into() })
    }

    #[test]
    fn round_trip_preserves_frames_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let clip = test_clip();
        save_clip_dir(&clip, dir.path(), BitDepth::Sixteen).unwrap();
        let back = load_clip_dir(dir.path()).unwrap();
        assert_eq!(back.len(), clip.len());
        assert_eq!(back.fps, clip.fps);
        assert_eq!(back.label, clip.label);
        for (a, b) in clip.frames.iter().zip(back.frames.iter()) {
            let max_err = a
                .pixels
                .iter()
                .zip(b.pixels.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(max_err <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn missing_frame_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_clip_dir(&test_clip(), dir.path(), BitDepth::Eight).unwrap();
        std::fs::remove_file(dir.path().join("frame_00001.pgm")).unwrap();
        assert!(matches!(load_clip_dir(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn inconsistent_frame_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_clip_dir(&test_clip(), dir.path(), BitDepth::Eight).unwrap();
        // Overwrite one frame with different dimensions.
        let odd = ndarray::Array2::zeros((8, 8));
        pgm::write_pgm(&dir.path().join("frame_00001.pgm"), &odd, BitDepth::Eight).unwrap();
        assert!(matches!(load_clip_dir(dir.path()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn bit_depth_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_clip_dir(&test_clip(), dir.path(), BitDepth::Eight).unwrap();
        let frame = test_clip().frames[0].pixels.clone();
        pgm::write_pgm(&dir.path().join("frame_00001.pgm"), &frame, BitDepth::Sixteen).unwrap();
        assert!(matches!(load_clip_dir(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn single_frame_clip_is_invalid() {
        let frame = Frame::zeros(8, 8).unwrap();
        assert!(Clip::from_frames(vec![frame], 24.0).is_err());
    }

    #[test]
    fn window_and_reverse() {
        let clip = test_clip();
        let win = clip.window(1, 2).unwrap();
        assert_eq!(win.len(), 2);
        assert_eq!(win.frames[0].pixels, clip.frames[1].pixels);
        assert!(clip.window(2, 2).is_err());
        let rev = clip.reversed();
        assert_eq!(rev.frames[0].pixels, clip.frames[2].pixels);
    }
}
