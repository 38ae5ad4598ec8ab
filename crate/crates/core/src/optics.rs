//! Lensless coded-aperture capture: the observation is the scene convolved
//! with the mask pattern, plus sensor noise.
//!
//! Two convolution modes are provided. Without boundary effect, the scene
//! wraps circularly (inverse DFT of the product of forward DFTs). With
//! boundary effect, scene and mask are zero-padded to (2H-1) x (2W-1) rounded
//! up to even, linearly convolved via the DFT, and center-cropped back to
//! H x W. The mask's index (0, 0) is the kernel origin; no implicit shift is
//! applied to the pattern.

use crate::clip::Clip;
use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2_real};
use crate::frame::Frame;
use crate::mask::Mask;
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureConfig {
    /// Simulate the finite-support boundary effect instead of circular wrap.
    pub boundary_effect: bool,
    /// Std of additive Gaussian noise, in units where the pre-noise peak is 1.
    pub noise_sigma: f64,
    /// Rescale the output to [0, 1] by its own maximum.
    pub normalize_output: bool,
    /// Seed for the noise generator; frames of a clip use per-index streams.
    pub seed: u64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self { boundary_effect: false, noise_sigma: 0.0, normalize_output: true, seed: 0 }
    }
}

impl CaptureConfig {
    pub fn noiseless() -> Self {
        Self { normalize_output: false, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be a nonnegative real, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Capture one frame through a mask.
pub fn capture(frame: &Frame, mask: &Mask, cfg: &CaptureConfig) -> Result<Frame> {
    cfg.validate()?;
    if frame.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "frame {}x{} vs mask {}x{}",
            frame.height(),
            frame.width(),
            mask.height(),
            mask.width()
        )));
    }
    let convolved = if cfg.boundary_effect {
        convolve_with_boundary(frame, mask)
    } else {
        convolve_circular(frame, mask)
    };
    Ok(finish_capture(convolved, cfg, 0))
}

/// Capture every frame of a clip with one fixed mask.
///
/// Noise streams are derived from `(cfg.seed, frame index)`, so parallel
/// execution order cannot change the result.
pub fn capture_clip(clip: &Clip, mask: &Mask, cfg: &CaptureConfig) -> Result<Clip> {
    cfg.validate()?;
    for frame in &clip.frames {
        if frame.dims() != mask.dims() {
            return Err(Error::DimensionMismatch(format!(
                "clip frame {}x{} vs mask {}x{}",
                frame.height(),
                frame.width(),
                mask.height(),
                mask.width()
            )));
        }
    }
    let mask_spectrum = if cfg.boundary_effect { None } else { Some(fft2(&mask.to_frame().pixels)) };
    let frames: Vec<Frame> = clip
        .frames
        .par_iter()
        .enumerate()
        .map(|(index, frame)| {
            let convolved = match &mask_spectrum {
                Some(spec) => convolve_circular_with_spectrum(frame, spec),
                None => convolve_with_boundary(frame, mask),
            };
            finish_capture(convolved, cfg, index as u64)
        })
        .collect();
    Ok(Clip { frames, ..clip.clone() })
}

/// Circular convolution of a frame with a precomputed mask spectrum.
pub(crate) fn convolve_circular_with_spectrum(
    frame: &Frame,
    mask_spectrum: &Array2<Complex64>,
) -> Array2<f64> {
    let mut spec = fft2(&frame.pixels);
    spec.zip_mut_with(mask_spectrum, |a, &b| *a *= b);
    ifft2_real(&spec)
}

fn convolve_circular(frame: &Frame, mask: &Mask) -> Array2<f64> {
    convolve_circular_with_spectrum(frame, &fft2(&mask.to_frame().pixels))
}

fn convolve_with_boundary(frame: &Frame, mask: &Mask) -> Array2<f64> {
    let (h, w) = frame.dims();
    let ph = next_even(2 * h - 1);
    let pw = next_even(2 * w - 1);
    let mut padded_frame = Array2::zeros((ph, pw));
    padded_frame.slice_mut(ndarray::s![..h, ..w]).assign(&frame.pixels);
    let mut padded_mask = Array2::zeros((ph, pw));
    padded_mask.slice_mut(ndarray::s![..h, ..w]).assign(&mask.to_frame().pixels);

    let mut spec = fft2(&padded_frame);
    spec.zip_mut_with(&fft2(&padded_mask), |a, &b| *a *= b);
    let full = ifft2_real(&spec);

    let top = (ph - h) / 2;
    let left = (pw - w) / 2;
    full.slice(ndarray::s![top..top + h, left..left + w]).to_owned()
}

fn next_even(n: usize) -> usize {
    n + n % 2
}

fn finish_capture(mut pixels: Array2<f64>, cfg: &CaptureConfig, stream: u64) -> Frame {
    if cfg.noise_sigma > 0.0 {
        let peak = pixels.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let normal = Normal::new(0.0, cfg.noise_sigma * peak).expect("valid sigma");
            pixels.mapv_inplace(|v| v + normal.sample(&mut rng));
        }
    }
    if cfg.normalize_output {
        let max = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > 0.0 {
            pixels.mapv_inplace(|v| v / max);
        }
    }
    Frame { pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clip::Clip;
    use crate::mask::{generate_mask, MaskFamily};
    use rand::Rng;

    fn random_frame(h: usize, w: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap()
    }

    /// O(N^4) circular convolution, the independent reference for the FFT path.
    fn direct_circular(frame: &Frame, mask: &Mask) -> Array2<f64> {
        let (h, w) = frame.dims();
        let m = mask.to_frame().pixels;
        Array2::from_shape_fn((h, w), |(r, c)| {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    let mr = (r + h - i) % h;
                    let mc = (c + w - j) % w;
                    acc += frame.pixels[(i, j)] * m[(mr, mc)];
                }
            }
            acc
        })
    }

    /// Zero-padded linear convolution with the same center crop as capture.
    fn direct_linear_cropped(frame: &Frame, mask: &Mask) -> Array2<f64> {
        let (h, w) = frame.dims();
        let ph = next_even(2 * h - 1);
        let pw = next_even(2 * w - 1);
        let m = mask.to_frame().pixels;
        let mut full = Array2::zeros((ph, pw));
        for i in 0..h {
            for j in 0..w {
                for mi in 0..h {
                    for mj in 0..w {
                        full[(i + mi, j + mj)] += frame.pixels[(i, j)] * m[(mi, mj)];
                    }
                }
            }
        }
        let top = (ph - h) / 2;
        let left = (pw - w) / 2;
        full.slice(ndarray::s![top..top + h, left..left + w]).to_owned()
    }

    fn rel_l2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    #[test]
    fn delta_mask_is_identity_without_be() {
        let f = random_frame(32, 32, 1);
        let d = Mask::delta(32, 32).unwrap();
        let cfg = CaptureConfig::noiseless();
        let out = capture(&f, &d, &cfg).unwrap();
        let err = rel_l2(&out.pixels, &f.pixels);
        assert!(err < 1e-12, "delta capture should be identity, err {err}");
    }

    #[test]
    fn zero_mask_gives_zero_output() {
        let f = random_frame(16, 16, 2);
        let z = Mask::zeros(16, 16).unwrap();
        let out = capture(&f, &z, &CaptureConfig::default()).unwrap();
        assert!(out.pixels.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn circular_convolution_matches_direct_oracle() {
        let f = random_frame(64, 64, 3);
        let m = generate_mask(MaskFamily::Pseudorandom, 64, 64, 0.5, 3).unwrap();
        let out = capture(&f, &m, &CaptureConfig::noiseless()).unwrap();
        let expect = direct_circular(&f, &m);
        let err = rel_l2(&out.pixels, &expect);
        assert!(err <= 1e-6, "relative L2 {err}");
    }

    #[test]
    fn boundary_convolution_matches_direct_oracle() {
        let f = random_frame(24, 24, 4);
        let m = generate_mask(MaskFamily::Pseudorandom, 24, 24, 0.5, 4).unwrap();
        let cfg = CaptureConfig { boundary_effect: true, ..CaptureConfig::noiseless() };
        let out = capture(&f, &m, &cfg).unwrap();
        let expect = direct_linear_cropped(&f, &m);
        let err = rel_l2(&out.pixels, &expect);
        assert!(err <= 1e-6, "relative L2 {err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = random_frame(16, 16, 5);
        let m = generate_mask(MaskFamily::Pseudorandom, 32, 32, 0.5, 5).unwrap();
        assert!(matches!(
            capture(&f, &m, &CaptureConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn capture_is_linear_with_noise_off() {
        let f1 = random_frame(32, 32, 6);
        let f2 = random_frame(32, 32, 7);
        let m = generate_mask(MaskFamily::Pseudorandom, 32, 32, 0.5, 6).unwrap();
        for be in [false, true] {
            let cfg = CaptureConfig { boundary_effect: be, ..CaptureConfig::noiseless() };
            let (alpha, beta) = (0.7, -0.3);
            let mixed = Frame {
                pixels: f1.pixels.mapv(|v| alpha * v) + &f2.pixels.mapv(|v| beta * v),
            };
            let lhs = capture(&mixed, &m, &cfg).unwrap();
            let a = capture(&f1, &m, &cfg).unwrap();
            let b = capture(&f2, &m, &cfg).unwrap();
            let rhs = a.pixels.mapv(|v| alpha * v) + &b.pixels.mapv(|v| beta * v);
            assert!(rel_l2(&lhs.pixels, &rhs) < 1e-6, "boundary_effect={be}");
        }
    }

    #[test]
    fn circular_capture_commutes_with_shift() {
        let f = random_frame(32, 32, 8);
        let m = generate_mask(MaskFamily::Pseudorandom, 32, 32, 0.5, 8).unwrap();
        let cfg = CaptureConfig::noiseless();
        let lhs = capture(&f.shift_circular(5, -3), &m, &cfg).unwrap();
        let rhs = capture(&f, &m, &cfg).unwrap().shift_circular(5, -3);
        assert!(rel_l2(&lhs.pixels, &rhs.pixels) < 1e-6);
    }

    #[test]
    fn output_mean_is_mask_sum_times_input_mean() {
        let f = random_frame(32, 32, 9);
        let m = generate_mask(MaskFamily::Pseudorandom, 32, 32, 0.5, 9).unwrap();
        let out = capture(&f, &m, &CaptureConfig::noiseless()).unwrap();
        let expect = m.open_count() as f64 * f.mean();
        assert!((out.mean() - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn clip_capture_is_deterministic_and_per_frame_seeded() {
        let clip = Clip::from_frames(
            (0..3).map(|i| random_frame(16, 16, 10 + i)).collect(),
            24.0,
        )
        .unwrap();
        let m = generate_mask(MaskFamily::Pseudorandom, 16, 16, 0.5, 10).unwrap();
        let cfg = CaptureConfig { noise_sigma: 0.05, ..CaptureConfig::default() };
        let a = capture_clip(&clip, &m, &cfg).unwrap();
        let b = capture_clip(&clip, &m, &cfg).unwrap();
        for (x, y) in a.frames.iter().zip(b.frames.iter()) {
            assert_eq!(x.pixels, y.pixels, "same config must reproduce bit-identically");
        }
        // Identical frames at different indices get different noise.
        let same = Clip::from_frames(vec![clip.frames[0].clone(); 2], 24.0).unwrap();
        let c = capture_clip(&same, &m, &cfg).unwrap();
        assert_ne!(c.frames[0].pixels, c.frames[1].pixels);
    }

    #[test]
    fn delta_mask_clip_round_trip() {
        let clip = Clip::from_frames(
            (0..3).map(|i| random_frame(16, 16, 20 + i)).collect(),
            30.0,
        )
        .unwrap();
        let d = Mask::delta(16, 16).unwrap();
        let out = capture_clip(&clip, &d, &CaptureConfig::noiseless()).unwrap();
        for (a, b) in out.frames.iter().zip(clip.frames.iter()) {
            assert!(rel_l2(&a.pixels, &b.pixels) < 1e-12);
        }
    }

    #[test]
    fn boundary_effect_changes_output() {
        let f = random_frame(32, 32, 30);
        let m = generate_mask(MaskFamily::Pseudorandom, 32, 32, 0.5, 30).unwrap();
        let without = capture(&f, &m, &CaptureConfig::noiseless()).unwrap();
        let cfg = CaptureConfig { boundary_effect: true, ..CaptureConfig::noiseless() };
        let with = capture(&f, &m, &cfg).unwrap();
        let max_diff = without
            .pixels
            .iter()
            .zip(with.pixels.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
    }
}
