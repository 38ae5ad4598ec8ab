//! Desk-scale synthetic benchmark: labeled clips of parametric sprite motions
//! over static backgrounds, plus the augmentation pipeline used in training.
//!
//! Everything is procedurally textured from seeds, so the repository carries
//! no image assets. Ground-truth per-frame motion is recorded in each clip's
//! provenance and follows the same convention as recovered estimates:
//! positive dx/dy means content moves right/down from frame t to t+1.

use crate::clip::{Clip, Label, MotionStep, Provenance};
use crate::error::{Error, Result};
use crate::frame::Frame;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The seven motion classes of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionClass {
    TranslateH,
    TranslateV,
    Diagonal,
    Rotate,
    ScalePulse,
    Jump,
    Still,
}

impl MotionClass {
    pub const ALL: [MotionClass; 7] = [
        MotionClass::TranslateH,
        MotionClass::TranslateV,
        MotionClass::Diagonal,
        MotionClass::Rotate,
        MotionClass::ScalePulse,
        MotionClass::Jump,
        MotionClass::Still,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::TranslateH => "translate-h",
            MotionClass::TranslateV => "translate-v",
            MotionClass::Diagonal => "diagonal",
            MotionClass::Rotate => "rotate",
            MotionClass::ScalePulse => "scale-pulse",
            MotionClass::Jump => "jump",
            MotionClass::Still => "still",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|c| c.name() == name)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown motion class '{name}'")))
    }
}

/// Parameters for one generated clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub class: MotionClass,
    pub height: usize,
    pub width: usize,
    pub length: usize,
    /// px/frame for translations, rad/frame for rotation, scale factor per
    /// frame for scale pulses. Ignored for `still`.
    pub speed: f64,
    /// Sprite disk radius in pixels.
    pub sprite_radius: f64,
    pub seed: u64,
    pub fps: f64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "clip length must be at least 2, got {}",
                self.length
            )));
        }
        if self.speed < 0.0 || !self.speed.is_finite() {
            return Err(Error::InvalidParameter(format!("speed must be >= 0, got {}", self.speed)));
        }
        let max_radius = self.max_sprite_radius();
        let limit = (self.height.min(self.width) as f64 - 1.0) / 2.0 - FEATHER;
        if max_radius > limit {
            return Err(Error::InvalidParameter(format!(
                "sprite radius {max_radius:.1} px does not fit a {}x{} frame",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Largest radius reached over the clip (scale pulses grow the sprite).
    fn max_sprite_radius(&self) -> f64 {
        match self.class {
            MotionClass::ScalePulse => {
                self.sprite_radius * self.speed.max(1.0).powi(SCALE_PULSE_HALF_PERIOD as i32)
            }
            _ => self.sprite_radius,
        }
    }
}

const FEATHER: f64 = 3.0;

/// Scale pulses alternate this many growing frames with as many shrinking.
const SCALE_PULSE_HALF_PERIOD: usize = 3;

/// Mix two seeds into a new stream (splitmix64 finalizer).
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded value noise: a coarse random grid bilinearly upsampled.
fn value_noise(height: usize, width: usize, grid: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = Array2::from_shape_simple_fn((grid + 1, grid + 1), || rng.gen::<f64>());
    Array2::from_shape_fn((height, width), |(r, c)| {
        let gy = r as f64 / height as f64 * grid as f64;
        let gx = c as f64 / width as f64 * grid as f64;
        let y0 = gy.floor() as usize;
        let x0 = gx.floor() as usize;
        let fy = gy - y0 as f64;
        let fx = gx - x0 as f64;
        coarse[(y0, x0)] * (1.0 - fy) * (1.0 - fx)
            + coarse[(y0, x0 + 1)] * (1.0 - fy) * fx
            + coarse[(y0 + 1, x0)] * fy * (1.0 - fx)
            + coarse[(y0 + 1, x0 + 1)] * fy * fx
    })
}

/// Multi-octave textured scene with values in [0, 1]. Content spans coarse
/// blobs down to few-pixel detail, so features exist at every scale.
pub fn textured_scene(height: usize, width: usize, seed: u64) -> Frame {
    let octaves = [(4usize, 1.0f64), (8, 0.65), (16, 0.4), (32, 0.25), (64, 0.15)];
    let mut acc = Array2::zeros((height, width));
    for (i, (grid, weight)) in octaves.iter().enumerate() {
        let grid = (*grid).min(height.min(width) / 2).max(2);
        let layer = value_noise(height, width, grid, derive_seed(seed, i as u64 + 1));
        acc.zip_mut_with(&layer, |a, &b| *a += weight * b);
    }
    let min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    Frame { pixels: acc.mapv(|v| (v - min) / span) }
}

/// Textured scene under a smooth radial window that decays to zero at the
/// frame border. Rotating or scaling this frame keeps its support consistent,
/// which is what log-polar registration tests need.
pub fn windowed_scene(height: usize, width: usize, seed: u64) -> Frame {
    let tex = textured_scene(height, width, seed);
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let r_flat = 0.20 * height.min(width) as f64;
    let r_zero = 0.48 * height.min(width) as f64;
    let pixels = Array2::from_shape_fn((height, width), |(r, c)| {
        let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
        let env = if d <= r_flat {
            1.0
        } else if d >= r_zero {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (d - r_flat) / (r_zero - r_flat)).cos())
        };
        tex.pixels[(r, c)] * env
    });
    Frame { pixels }
}

/// Per-frame sprite pose.
#[derive(Debug, Clone, Copy)]
struct Pose {
    y: f64,
    x: f64,
    angle: f64,
    scale: f64,
}

fn trajectory(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let h = spec.height as f64;
    let w = spec.width as f64;
    let cy = (h - 1.0) / 2.0;
    let cx = (w - 1.0) / 2.0;
    let l = spec.length;
    let margin = spec.max_sprite_radius() + FEATHER + 1.0;
    let clamp_y = |y: f64| y.clamp(margin, h - 1.0 - margin);
    let clamp_x = |x: f64| x.clamp(margin, w - 1.0 - margin);
    let sign = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { 1.0 } else { -1.0 };

    let mut poses = Vec::with_capacity(l);
    match spec.class {
        MotionClass::Still => {
            for _ in 0..l {
                poses.push(Pose { y: cy, x: cx, angle: 0.0, scale: 1.0 });
            }
        }
        MotionClass::TranslateH | MotionClass::TranslateV | MotionClass::Diagonal => {
            let (vx, vy) = match spec.class {
                MotionClass::TranslateH => (spec.speed * sign(rng), 0.0),
                MotionClass::TranslateV => (0.0, spec.speed * sign(rng)),
                _ => (spec.speed * sign(rng), spec.speed * sign(rng)),
            };
            // Center the path so the whole trajectory stays inside the frame.
            let span = (l - 1) as f64;
            let start_x = cx - vx * span / 2.0;
            let start_y = cy - vy * span / 2.0;
            for t in 0..l {
                poses.push(Pose {
                    y: clamp_y(start_y + vy * t as f64),
                    x: clamp_x(start_x + vx * t as f64),
                    angle: 0.0,
                    scale: 1.0,
                });
            }
        }
        MotionClass::Rotate => {
            let omega = spec.speed * sign(rng);
            for t in 0..l {
                poses.push(Pose { y: cy, x: cx, angle: omega * t as f64, scale: 1.0 });
            }
        }
        MotionClass::ScalePulse => {
            // Oscillate: grow for a few frames, shrink back, repeat, so long
            // clips never outgrow the frame.
            let grow_first = rng.gen::<bool>();
            let rate = spec.speed.max(1.0);
            let q = SCALE_PULSE_HALF_PERIOD;
            let mut scale = 1.0;
            for t in 0..l {
                poses.push(Pose { y: cy, x: cx, angle: 0.0, scale });
                let leg = (t / q) % 2 == 0;
                let growing = if grow_first { leg } else { !leg };
                scale *= if growing { rate } else { 1.0 / rate };
            }
        }
        MotionClass::Jump => {
            let v = spec.speed * sign(rng);
            let half = (l - 1) / 2;
            let start_y = cy + v * half as f64 / 2.0;
            let mut y = start_y;
            for t in 0..l {
                poses.push(Pose { y: clamp_y(y), x: cx, angle: 0.0, scale: 1.0 });
                y += if t < half { -v } else { v };
            }
        }
    }
    poses
}

/// Generate a labeled clip with ground-truth motion in its provenance.
pub fn generate_clip(spec: &SynthSpec) -> Result<Clip> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Smooth, low-contrast background so moving texture dominates the
    // whitened spectrum.
    let bg_coarse = value_noise(spec.height, spec.width, 3, derive_seed(spec.seed, 100));
    let background = bg_coarse.mapv(|v| 0.35 + 0.15 * v);

    // The sprite texture patch is sized for the largest pose so scale pulses
    // can sample it without running off the edge. A few oriented gratings on
    // top of the value noise give the spectrum clear angular structure, which
    // is what makes small rotations stand out in log-polar space.
    let patch_half = (spec.max_sprite_radius() + FEATHER + 2.0).ceil();
    let patch_size = (2.0 * patch_half) as usize + 1;
    let tex = {
        let coarse =
            value_noise(patch_size, patch_size, (patch_size / 6).max(2), derive_seed(spec.seed, 200));
        let fine =
            value_noise(patch_size, patch_size, (patch_size / 3).max(3), derive_seed(spec.seed, 201));
        let mut grating_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 202));
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    grating_rng.gen_range(0.0..std::f64::consts::PI),
                    grating_rng.gen_range(0.15..0.35),
                    grating_rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let gratings = Array2::from_shape_fn((patch_size, patch_size), |(r, c)| {
            let mut acc = 0.0;
            for &(angle, freq, phase) in &waves {
                let u = angle.cos() * c as f64 + angle.sin() * r as f64;
                acc += (std::f64::consts::TAU * freq * u + phase).sin();
            }
            (acc / 3.0 + 1.0) / 2.0
        });
        let mut t = coarse;
        ndarray::Zip::from(&mut t).and(&fine).and(&gratings).for_each(|a, &b, &g| {
            *a = 0.35 * *a + 0.3 * b + 0.35 * g;
        });
        t
    };
    let tex_frame = Frame { pixels: tex };

    let poses = trajectory(spec, &mut rng);
    let radius = spec.sprite_radius;

    let frames: Vec<Frame> = poses
        .iter()
        .map(|pose| {
            let mut pixels = background.clone();
            render_sprite(&mut pixels, &tex_frame, pose, radius, patch_half);
            Frame { pixels }
        })
        .collect();

    let steps: Vec<MotionStep> = poses
        .windows(2)
        .map(|p| MotionStep {
            dx: p[1].x - p[0].x,
            dy: p[1].y - p[0].y,
            dtheta: p[1].angle - p[0].angle,
            dscale: p[1].scale / p[0].scale,
        })
        .collect();

    let class_id = MotionClass::ALL.iter().position(|&c| c == spec.class).unwrap() as u32;
    let mut clip = Clip::from_frames(frames, spec.fps)?
        .with_label(Label { id: class_id, name: spec.class.name().to_string() });
    clip.provenance = Some(Provenance::Generated {
        class: spec.class.name().to_string(),
        seed: spec.seed,
        speed: spec.speed,
        steps,
    });
    Ok(clip)
}

/// Blend zero-mean sprite texture into the background at one pose.
///
/// The texture is added as a deviation around the local background rather
/// than pasted over it: a pasted disk carries a pose-invariant brightness
/// step whose spectral rings would dominate the rotating content, whereas a
/// zero-mean blend moves all of the sprite's spectral energy with the pose.
fn render_sprite(pixels: &mut Array2<f64>, tex: &Frame, pose: &Pose, radius: f64, patch_half: f64) {
    const CONTRAST: f64 = 0.7;
    let (h, w) = pixels.dim();
    let reach = radius * pose.scale + FEATHER + 1.0;
    let r0 = ((pose.y - reach).floor().max(0.0)) as usize;
    let r1 = ((pose.y + reach).ceil().min(h as f64 - 1.0)) as usize;
    let c0 = ((pose.x - reach).floor().max(0.0)) as usize;
    let c1 = ((pose.x + reach).ceil().min(w as f64 - 1.0)) as usize;
    let (sin, cos) = pose.angle.sin_cos();
    let inv_scale = 1.0 / pose.scale;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let y = r as f64 - pose.y;
            let x = c as f64 - pose.x;
            // Inverse pose transform into the sprite's own frame.
            let sx = (cos * x + sin * y) * inv_scale;
            let sy = (-sin * x + cos * y) * inv_scale;
            let d = (sx * sx + sy * sy).sqrt();
            let alpha = ((radius + FEATHER / 2.0 - d) / FEATHER).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let v = tex.sample_bilinear(sy + patch_half, sx + patch_half);
                let p = &mut pixels[(r, c)];
                *p = (*p + alpha * CONTRAST * (v - 0.5)).clamp(0.0, 1.0);
            }
        }
    }
}

/// Record of the transform an augmentation pass applied.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub rescale: usize,
    pub flipped: bool,
    pub crop_top: usize,
    pub crop_left: usize,
}

/// Seeded augmentation: rescale to a random size between `target` and the
/// original, vertical flip with 50% chance, then a random `target`-sized
/// crop. The same transform applies to every frame of the clip.
pub fn augment(clip: &Clip, target: usize, seed: u64) -> Result<Clip> {
    augment_with_record(clip, target, seed).map(|(c, _)| c)
}

/// [`augment`] plus the record of what was applied.
pub fn augment_with_record(clip: &Clip, target: usize, seed: u64) -> Result<(Clip, AugmentRecord)> {
    let (h, w) = clip.dims();
    let side = h.min(w);
    if target > side {
        return Err(Error::InvalidParameter(format!(
            "augment target {target} exceeds clip size {h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rescale = rng.gen_range(target..=side);
    let flipped = rng.gen::<bool>();
    let max_off = rescale - target;
    let crop_top = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
    let crop_left = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
    let record = AugmentRecord { rescale, flipped, crop_top, crop_left };

    let out = clip.map_frames(|f| {
        let mut g = f.resize_bilinear(rescale, rescale)?;
        if flipped {
            g = g.flip_vertical();
        }
        g.crop(crop_top, crop_left, target)
    })?;
    Ok((out, record))
}

/// Benchmark generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub classes: Vec<MotionClass>,
    pub clips_per_class: usize,
    pub size: usize,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    /// Desk-scale default: 7 classes x 60 clips x 128x128 x 21 frames.
    fn default() -> Self {
        Self {
            classes: MotionClass::ALL.to_vec(),
            clips_per_class: 60,
            size: 128,
            frames: 21,
            fps: 30.0,
            seed: 0,
        }
    }
}

/// A generated benchmark: clips with class indices into `classes`.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub classes: Vec<String>,
    pub clips: Vec<(Clip, usize)>,
}

/// Draw the per-clip spec for one benchmark entry.
fn sample_spec(class: MotionClass, cfg: &BenchmarkConfig, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.size as f64;
    // Rotation and scaling need a sprite large enough to dominate the
    // spectrum; translations need room to travel.
    let sprite_radius = match class {
        MotionClass::Rotate => size * rng.gen_range(0.30..0.36),
        MotionClass::ScalePulse => size * rng.gen_range(0.26..0.31),
        _ => size * rng.gen_range(0.12..0.16),
    };
    let speed = match class {
        MotionClass::TranslateH | MotionClass::TranslateV | MotionClass::Diagonal
        | MotionClass::Jump => {
            let cap = ((size - 2.0 * (sprite_radius + FEATHER + 1.0) - 2.0)
                / (cfg.frames - 1) as f64)
                .floor()
                .max(1.0);
            (rng.gen_range(3..=4) as f64).min(cap)
        }
        MotionClass::Rotate => rng.gen_range(0.08..0.13),
        MotionClass::ScalePulse => rng.gen_range(1.09..1.13),
        MotionClass::Still => 0.0,
    };
    SynthSpec {
        class,
        height: cfg.size,
        width: cfg.size,
        length: cfg.frames,
        speed,
        sprite_radius,
        seed: derive_seed(seed, 7),
        fps: cfg.fps,
    }
}

/// Generate the full benchmark; equal clip counts per class.
pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    if cfg.classes.is_empty() || cfg.clips_per_class == 0 {
        return Err(Error::InvalidParameter("benchmark needs classes and clips".into()));
    }
    let jobs: Vec<(MotionClass, usize, u64)> = cfg
        .classes
        .iter()
        .enumerate()
        .flat_map(|(ci, &class)| {
            (0..cfg.clips_per_class).map(move |k| {
                (class, ci, derive_seed(cfg.seed, (ci * 10_000 + k) as u64))
            })
        })
        .collect();
    let clips: Result<Vec<(Clip, usize)>> = jobs
        .par_iter()
        .map(|&(class, ci, seed)| {
            let spec = sample_spec(class, cfg, seed);
            generate_clip(&spec).map(|c| (c, ci))
        })
        .collect();
    Ok(Benchmark {
        classes: cfg.classes.iter().map(|c| c.name().to_string()).collect(),
        clips: clips?,
    })
}

/// Stratified split into train/val/test index lists (per class, seeded).
pub fn split_indices(
    bench: &Benchmark,
    ratios: (f64, f64),
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let n_classes = bench.classes.len();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, (_, ci)) in bench.clips.iter().enumerate() {
        per_class[*ci].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for indices in &mut per_class {
        indices.shuffle(&mut rng);
        let n = indices.len();
        let n_train = ((n as f64) * ratios.0).round() as usize;
        let n_val = ((n as f64) * ratios.1).round() as usize;
        let n_train = n_train.min(n);
        let n_val = n_val.min(n - n_train);
        train.extend_from_slice(&indices[..n_train]);
        val.extend_from_slice(&indices[n_train..n_train + n_val]);
        test.extend_from_slice(&indices[n_train + n_val..]);
    }
    (train, val, test)
}

/// Split manifest written next to a generated benchmark directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub classes: Vec<String>,
    pub clip_dirs: Vec<String>,
    pub clip_classes: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}
