//! Multi-stride TRS feature stacks.
//!
//! For a clip of length `l` and stride `s`, frame pairs `(i*s, i*s + s)` for
//! `i = 0 .. floor((l-1)/s) - 1` each contribute one T map and one RS map.
//! Channels are ordered by ascending stride; within a stride all T maps come
//! first, then all RS maps, pair index ascending. T maps are center-cropped
//! to `crop_size`; RS maps are center-cropped along the log-radius axis and
//! linearly resized along the angle axis.

use crate::clip::Clip;
use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::frame::MIN_DIM;
use crate::motion::{
    centered_magnitude, cross_power_from_spectra, LogPolarParams, LogPolarPlan, MapKind,
};
use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Strides, clip length, and the two working resolutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrideConfig {
    pub strides: Vec<usize>,
    pub clip_length: usize,
    /// Resolution at which CA frames and maps are computed.
    pub sim_size: usize,
    /// Side length of the cropped feature channels.
    pub crop_size: usize,
}

impl StrideConfig {
    pub fn new(strides: Vec<usize>, clip_length: usize, sim_size: usize, crop_size: usize) -> Result<Self> {
        let cfg = Self { strides, clip_length, sim_size, crop_size };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Paper-scale defaults: CA at 256, features cropped to 224.
    pub fn with_strides(strides: Vec<usize>, clip_length: usize) -> Result<Self> {
        Self::new(strides, clip_length, 256, 224)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() {
            return Err(Error::InvalidParameter("at least one stride is required".into()));
        }
        if !self.strides.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "strides must be strictly ascending, got {:?}",
                self.strides
            )));
        }
        for &s in &self.strides {
            n_pairs(s, self.clip_length)?;
        }
        if self.crop_size < MIN_DIM || self.sim_size < self.crop_size {
            return Err(Error::InvalidParameter(format!(
                "need sim_size >= crop_size >= {MIN_DIM}, got sim {} crop {}",
                self.sim_size, self.crop_size
            )));
        }
        Ok(())
    }
}

/// Number of consecutive frame pairs at one stride: floor((l-1)/s).
pub fn n_pairs(stride: usize, clip_length: usize) -> Result<usize> {
    if stride == 0 || stride >= clip_length {
        return Err(Error::InvalidParameter(format!(
            "stride must satisfy 1 <= stride < clip length, got stride {stride}, length {clip_length}"
        )));
    }
    Ok((clip_length - 1) / stride)
}

/// Total channel count: two channels (T and RS) per pair, summed over strides.
pub fn stack_channels(cfg: &StrideConfig) -> Result<usize> {
    cfg.validate()?;
    let mut total = 0;
    for &s in &cfg.strides {
        total += 2 * n_pairs(s, cfg.clip_length)?;
    }
    Ok(total)
}

/// Where one feature channel came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub stride: usize,
    pub pair_index: usize,
    pub kind: MapKind,
}

/// A C x H x W stack of T/RS maps plus channel provenance.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub tensor: Array3<f32>,
    pub channels: Vec<ChannelMeta>,
    pub crop_size: usize,
}

/// Per-stride map extraction on precomputed frame spectra. This is the shared
/// engine behind [`extract_mstrs`] and the training pipeline, which fuses the
/// CA simulation into the spectra instead of materializing CA frames.
pub(crate) fn build_stack_from_spectra(
    spectra: &[Array2<Complex64>],
    cfg: &StrideConfig,
    epsilon: f64,
    include_rs: bool,
) -> Result<(Array3<f64>, Vec<ChannelMeta>)> {
    cfg.validate()?;
    if spectra.len() < cfg.clip_length {
        return Err(Error::ClipTooShort { needed: cfg.clip_length, actual: spectra.len() });
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let sim = cfg.sim_size;
    for spec in &spectra[..cfg.clip_length] {
        if spec.dim() != (sim, sim) {
            return Err(Error::DimensionMismatch(format!(
                "spectrum {}x{} does not match sim size {sim}",
                spec.dim().0,
                spec.dim().1
            )));
        }
    }

    // Log-polar magnitude spectra (and their DFTs) are shared across strides.
    let lp_spectra: Option<Vec<Array2<Complex64>>> = if include_rs {
        let params = LogPolarParams::for_height(sim);
        let plan = LogPolarPlan::new(sim, sim, &params)?;
        Some(
            spectra[..cfg.clip_length]
                .iter()
                .map(|spec| fft2(&plan.sample(&centered_magnitude(spec)).values))
                .collect(),
        )
    } else {
        None
    };

    let per_pair = if include_rs { 2 } else { 1 };
    let total: usize = cfg
        .strides
        .iter()
        .map(|&s| per_pair * n_pairs(s, cfg.clip_length).unwrap_or(0))
        .sum();
    let crop = cfg.crop_size;
    let mut tensor = Array3::zeros((total, crop, crop));
    let mut channels = Vec::with_capacity(total);
    let mut ch = 0;

    for &stride in &cfg.strides {
        let pairs = n_pairs(stride, cfg.clip_length)?;
        for pair in 0..pairs {
            let (a, b) = (pair * stride, pair * stride + stride);
            let map = cross_power_from_spectra(&spectra[a], &spectra[b], epsilon);
            center_crop_into(&map.view(), tensor.index_axis_mut(ndarray::Axis(0), ch));
            channels.push(ChannelMeta { stride, pair_index: pair, kind: MapKind::T });
            ch += 1;
        }
        if let Some(lp) = &lp_spectra {
            for pair in 0..pairs {
                let (a, b) = (pair * stride, pair * stride + stride);
                let map = cross_power_from_spectra(&lp[a], &lp[b], epsilon);
                rho_crop_theta_resize_into(&map.view(), tensor.index_axis_mut(ndarray::Axis(0), ch));
                channels.push(ChannelMeta { stride, pair_index: pair, kind: MapKind::Rs });
                ch += 1;
            }
        }
    }
    Ok((tensor, channels))
}

/// Center-crop a square map into a destination channel.
fn center_crop_into(map: &ArrayView2<f64>, mut dst: ndarray::ArrayViewMut2<f64>) {
    let (h, w) = map.dim();
    let crop = dst.dim().0;
    let top = (h - crop) / 2;
    let left = (w - crop) / 2;
    for r in 0..crop {
        for c in 0..crop {
            dst[(r, c)] = map[(top + r, left + c)];
        }
    }
}

/// RS maps: crop rows (log-radius) centrally, linearly resize columns (angle).
fn rho_crop_theta_resize_into(map: &ArrayView2<f64>, mut dst: ndarray::ArrayViewMut2<f64>) {
    let (h, w) = map.dim();
    let crop = dst.dim().0;
    let top = (h - crop) / 2;
    let sx = w as f64 / crop as f64;
    for r in 0..crop {
        for c in 0..crop {
            let src = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
            let c0 = src.floor() as usize;
            let c1 = (c0 + 1).min(w - 1);
            let fc = src - c0 as f64;
            dst[(r, c)] = map[(top + r, c0)] * (1.0 - fc) + map[(top + r, c1)] * fc;
        }
    }
}

/// Extract the full MS-TRS stack from a CA clip at `sim_size` resolution.
pub fn extract_mstrs(ca_clip: &Clip, cfg: &StrideConfig, epsilon: f64) -> Result<FeatureStack> {
    cfg.validate()?;
    if ca_clip.len() < cfg.clip_length {
        return Err(Error::ClipTooShort { needed: cfg.clip_length, actual: ca_clip.len() });
    }
    if ca_clip.dims() != (cfg.sim_size, cfg.sim_size) {
        return Err(Error::DimensionMismatch(format!(
            "clip frames {}x{} do not match sim size {}",
            ca_clip.dims().0,
            ca_clip.dims().1,
            cfg.sim_size
        )));
    }
    let spectra: Vec<Array2<Complex64>> = ca_clip.frames[..cfg.clip_length]
        .iter()
        .map(|f| fft2(&f.pixels))
        .collect();
    let (tensor, channels) = build_stack_from_spectra(&spectra, cfg, epsilon, true)?;
    Ok(FeatureStack { tensor: tensor.mapv(|v| v as f32), channels, crop_size: cfg.crop_size })
}

const MSTR_MAGIC: &[u8; 4] = b"MSTR";
const MSTR_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StackTrailer {
    crop_size: usize,
    channels: Vec<ChannelMeta>,
}

/// Write a stack in the `.mstr` format: magic, version, C/H/W header,
/// float32 little-endian payload (channel-major, row-major), JSON trailer,
/// and the trailer length as a trailing u32.
pub fn write_stack(stack: &FeatureStack, path: &Path) -> Result<()> {
    let (c, h, w) = stack.tensor.dim();
    if stack.channels.len() != c {
        return Err(Error::InvalidParameter(format!(
            "channel metadata length {} does not match tensor C {c}",
            stack.channels.len()
        )));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MSTR_MAGIC)?;
    out.write_all(&MSTR_VERSION.to_le_bytes())?;
    out.write_all(&(c as u32).to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    for &v in stack.tensor.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    let trailer = serde_json::to_vec(&StackTrailer {
        crop_size: stack.crop_size,
        channels: stack.channels.clone(),
    })?;
    out.write_all(&trailer)?;
    out.write_all(&(trailer.len() as u32).to_le_bytes())?;
    out.flush()?;
    Ok(())
}

/// Read a `.mstr` file, validating magic, version, and length consistency.
pub fn read_stack(path: &Path) -> Result<FeatureStack> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(Error::Truncated { path: display, reason: "shorter than the fixed header".into() });
    }
    if &bytes[0..4] != MSTR_MAGIC {
        return Err(Error::BadMagic { path: display });
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != MSTR_VERSION {
        return Err(Error::BadVersion { path: display, version });
    }
    let c = u32_at(8) as usize;
    let h = u32_at(12) as usize;
    let w = u32_at(16) as usize;
    let payload_len = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Truncated {
            path: display.clone(),
            reason: "header dimensions overflow".into(),
        })?;
    let expected = 20 + payload_len + 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: display,
            reason: format!(
                "header promises {payload_len} payload bytes, file has {}",
                bytes.len().saturating_sub(24)
            ),
        });
    }
    let trailer_len = u32_at(bytes.len() - 4) as usize;
    if 20 + payload_len + trailer_len + 4 != bytes.len() {
        return Err(Error::Truncated {
            path: display,
            reason: format!(
                "trailer length {trailer_len} inconsistent with file size {}",
                bytes.len()
            ),
        });
    }
    let trailer: StackTrailer =
        serde_json::from_slice(&bytes[20 + payload_len..bytes.len() - 4])?;
    if trailer.channels.len() != c {
        return Err(Error::Format {
            path: display,
            reason: format!("trailer lists {} channels, header says {c}", trailer.channels.len()),
        });
    }
    let mut tensor = Array3::zeros((c, h, w));
    for (i, v) in tensor.iter_mut().enumerate() {
        let o = 20 + 4 * i;
        *v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    }
    Ok(FeatureStack { tensor, channels: trailer.channels, crop_size: trailer.crop_size })
}
