//! Binary (P5) PGM reading and writing, 8-bit and 16-bit.
//!
//! 16-bit samples are big-endian, following the Netpbm convention. Pixel
//! values map linearly between `[0, 1]` and `[0, maxval]`.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

/// Write a grid of `[0, 1]` values as binary PGM; values are clamped.
pub fn write_pgm(path: &Path, pixels: &Array2<f64>, depth: BitDepth) -> Result<()> {
    let (h, w) = pixels.dim();
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{w} {h}\n{}\n", depth.maxval())?;
    let maxval = depth.maxval() as f64;
    for &v in pixels.iter() {
        let q = (v.clamp(0.0, 1.0) * maxval).round() as u32;
        match depth {
            BitDepth::Eight => out.write_all(&[q as u8])?,
            BitDepth::Sixteen => out.write_all(&(q as u16).to_be_bytes())?,
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a binary PGM into `[0, 1]` values, reporting the stored bit depth.
pub fn read_pgm(path: &Path) -> Result<(Array2<f64>, BitDepth)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let display = path.display().to_string();
    let format_err = |reason: &str| Error::Format { path: display.clone(), reason: reason.into() };

    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comment lines between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated {
                path: display.clone(),
                reason: "header ended early".into(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if next_token(&bytes)? != "P5" {
        return Err(format_err("not a binary PGM (P5)"));
    }
    let w: usize = next_token(&bytes)?.parse().map_err(|_| format_err("bad width"))?;
    let h: usize = next_token(&bytes)?.parse().map_err(|_| format_err("bad height"))?;
    let maxval: u32 = next_token(&bytes)?.parse().map_err(|_| format_err("bad maxval"))?;
    let depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => return Err(format_err(&format!("unsupported maxval {other}"))),
    };
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;

    let sample_bytes = match depth {
        BitDepth::Eight => 1,
        BitDepth::Sixteen => 2,
    };
    let needed = h * w * sample_bytes;
    if bytes.len() < pos + needed {
        return Err(Error::Truncated {
            path: display,
            reason: format!("raster needs {needed} bytes, found {}", bytes.len() - pos),
        });
    }
    let raster = &bytes[pos..pos + needed];
    let maxval = depth.maxval() as f64;
    let pixels = Array2::from_shape_fn((h, w), |(r, c)| {
        let i = r * w + c;
        let q = match depth {
            BitDepth::Eight => raster[i] as u32,
            BitDepth::Sixteen => u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32,
        };
        q as f64 / maxval
    });
    Ok((pixels, depth))
}
