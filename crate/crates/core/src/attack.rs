//! Privacy probe: how much scene structure leaks through a CA frame to an
//! adversary who does not know the mask.
//!
//! A pseudorandom mask has a near-delta autocorrelation, so the
//! autocorrelation of a CA frame approximates the autocorrelation of the
//! scene itself. The similarity score here upper-bounds what a
//! correlation-based restoration attack has to work with.

use crate::error::{Error, Result};
use crate::fft::{fft2, fftshift2, ifft2_real};
use crate::frame::Frame;
use serde::{Deserialize, Serialize};

/// Circular autocorrelation via the |DFT|^2 route. The frame mean is removed
/// first, and the result is origin-centered.
pub fn autocorrelation(f: &Frame) -> Frame {
    let mean = f.mean();
    let centered = f.pixels.mapv(|v| v - mean);
    let power = fft2(&centered).mapv(|v| num_complex::Complex64::new(v.norm_sqr(), 0.0));
    Frame { pixels: fftshift2(&ifft2_real(&power)) }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Normalized cross-correlation between the autocorrelations of the CA
    /// frame and the scene frame, both DC-removed and peak-normalized.
    pub autocorr_similarity: f64,
}

/// Similarity between what the adversary can compute from the CA frame and
/// the scene's own autocorrelation.
pub fn leakage(scene: &Frame, ca: &Frame) -> Result<LeakageReport> {
    if scene.dims() != ca.dims() {
        return Err(Error::DimensionMismatch(format!(
            "scene {}x{} vs ca {}x{}",
            scene.height(),
            scene.width(),
            ca.height(),
            ca.width()
        )));
    }
    let r_scene = normalized_autocorr(scene);
    let r_ca = normalized_autocorr(ca);
    let similarity = match (r_scene, r_ca) {
        (Some(a), Some(b)) => {
            let dot: f64 = a.pixels.iter().zip(b.pixels.iter()).map(|(x, y)| x * y).sum();
            let na: f64 = a.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        }
        // A flat frame (e.g. CA through an all-clear mask) has no structure
        // left after DC removal; nothing correlates.
        _ => 0.0,
    };
    Ok(LeakageReport { autocorr_similarity: similarity })
}

fn normalized_autocorr(f: &Frame) -> Option<Frame> {
    let r = autocorrelation(f);
    // The center value equals sum((f - mean)^2); compare it against what
    // float rounding alone would produce on a perfectly flat frame.
    let peak = r.max();
    let n = (f.height() * f.width()) as f64;
    let scale = f.pixels.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= (1e-9 * scale).powi(2) * n {
        return None;
    }
    Some(r.scaled(1.0 / peak))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{generate_mask, Mask, MaskFamily};
    use crate::optics::{capture, CaptureConfig};
    use crate::synth::textured_scene;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autocorrelation_peaks_at_center() {
        let f = textured_scene(64, 64, 1);
        let r = autocorrelation(&f);
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for (idx, &v) in r.pixels.indexed_iter() {
            if v > best_val {
                best_val = v;
                best = idx;
            }
        }
        assert_eq!(best, (32, 32));
    }

    #[test]
    fn autocorrelation_is_even_symmetric() {
        let f = textured_scene(32, 32, 2);
        let r = autocorrelation(&f);
        let peak = r.max();
        for dr in -10i64..=10 {
            for dc in -10i64..=10 {
                let a = r.pixels[((16 + dr) as usize, (16 + dc) as usize)];
                let b = r.pixels[((16 - dr) as usize, (16 - dc) as usize)];
                assert!((a - b).abs() <= 1e-6 * peak, "asymmetry at ({dr},{dc})");
            }
        }
    }

    #[test]
    fn white_noise_autocorrelation_is_near_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Frame::from_fn(128, 128, |_, _| rng.gen::<f64>()).unwrap();
        let r = autocorrelation(&f);
        let peak = r.pixels[(64, 64)];
        let off_peak = r
            .pixels
            .indexed_iter()
            .filter(|((i, j), _)| (*i, *j) != (64, 64))
            .map(|(_, &v)| v.abs())
            .fold(0.0, f64::max);
        assert!(off_peak <= 0.2 * peak, "off-peak {off_peak} vs peak {peak}");
    }

    #[test]
    fn delta_mask_leaks_everything() {
        let scene = textured_scene(64, 64, 4);
        let ca = capture(&scene, &Mask::delta(64, 64).unwrap(), &CaptureConfig::noiseless())
            .unwrap();
        let report = leakage(&scene, &ca).unwrap();
        assert!((report.autocorr_similarity - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn pseudorandom_mask_leaks_autocorrelation() {
        let scene = textured_scene(128, 128, 5);
        let mask = generate_mask(MaskFamily::Pseudorandom, 128, 128, 0.5, 5).unwrap();
        let ca = capture(&scene, &mask, &CaptureConfig::noiseless()).unwrap();
        let report = leakage(&scene, &ca).unwrap();
        assert!(
            report.autocorr_similarity >= 0.8,
            "similarity {} below the leakage bound",
            report.autocorr_similarity
        );
    }

    #[test]
    fn all_clear_mask_destroys_structure() {
        let scene = textured_scene(64, 64, 6);
        let ca = capture(&scene, &Mask::ones(64, 64).unwrap(), &CaptureConfig::noiseless())
            .unwrap();
        let report = leakage(&scene, &ca).unwrap();
        assert!(report.autocorr_similarity.abs() <= 1e-6, "{}", report.autocorr_similarity);
    }

    #[test]
    fn noise_degrades_the_attack() {
        let mut clean_sum = 0.0;
        let mut noisy_sum = 0.0;
        for seed in 0..20u64 {
            let scene = textured_scene(128, 128, 100 + seed);
            let mask = generate_mask(MaskFamily::Pseudorandom, 128, 128, 0.5, 200 + seed).unwrap();
            let clean = capture(&scene, &mask, &CaptureConfig::noiseless()).unwrap();
            let noisy_cfg = CaptureConfig {
                noise_sigma: 0.1,
                normalize_output: false,
                seed,
                ..CaptureConfig::default()
            };
            let noisy = capture(&scene, &mask, &noisy_cfg).unwrap();
            clean_sum += leakage(&scene, &clean).unwrap().autocorr_similarity;
            noisy_sum += leakage(&scene, &noisy).unwrap().autocorr_similarity;
        }
        assert!(
            clean_sum / 20.0 > noisy_sum / 20.0,
            "clean mean {} should exceed noisy mean {}",
            clean_sum / 20.0,
            noisy_sum / 20.0
        );
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = textured_scene(32, 32, 7);
        let b = textured_scene(64, 64, 7);
        assert!(matches!(leakage(&a, &b), Err(Error::DimensionMismatch(_))));
    }
}
