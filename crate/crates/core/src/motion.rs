//! Phase-correlation motion features.
//!
//! Translation between two frames shows up as a delta in the inverse DFT of
//! the normalized cross-power spectrum; the whitening step makes the map
//! independent of global gain and, for broadband masks, of the coded-aperture
//! pattern itself. Rotation and scale are read off the same way after
//! resampling the spectral magnitude onto a log-polar grid, where they become
//! additive shifts along the two axes.
//!
//! Sign conventions (all maps are fftshift-centered, zero shift at the grid
//! center): if `f2` is `f1` with content moved by `(dy, dx)` rows/columns,
//! the map of `cross_power(f1, f2)` peaks at `center - (dy, dx)`. Recovered
//! estimates follow `o1(p) = o2(s R p + dp)`: a clip whose second frame is the
//! first rotated by `phi` and magnified by `s` reports `dtheta = phi`,
//! `scale = s`.

use crate::error::{Error, Result};
use crate::fft::{fft2, fftshift2, ifft2_real};
use crate::frame::Frame;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default cross-power regularizer.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    T,
    Rs,
}

/// Inverse DFT of a normalized cross-power spectrum, origin-centered.
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    pub values: Array2<f64>,
    pub kind: MapKind,
    pub epsilon: f64,
}

impl CorrelationMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Bin of zero shift.
    pub fn center(&self) -> (usize, usize) {
        let (h, w) = self.dims();
        (h / 2, w / 2)
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for (idx, &v) in self.values.indexed_iter() {
            if v > best_val {
                best_val = v;
                best = idx;
            }
        }
        best
    }

    pub fn peak_value(&self) -> f64 {
        self.values[self.argmax()]
    }

    /// Ratio of the top peak to the strongest value outside a 3x3 exclusion
    /// zone around it (toroidal). Higher means a cleaner single motion.
    pub fn peak_confidence(&self) -> f64 {
        let (h, w) = self.dims();
        let (pr, pc) = self.argmax();
        let peak = self.values[(pr, pc)];
        let mut second = f64::NEG_INFINITY;
        for ((r, c), &v) in self.values.indexed_iter() {
            let dr = (r as i64 - pr as i64).rem_euclid(h as i64).min((pr as i64 - r as i64).rem_euclid(h as i64));
            let dc = (c as i64 - pc as i64).rem_euclid(w as i64).min((pc as i64 - c as i64).rem_euclid(w as i64));
            if dr <= 1 && dc <= 1 {
                continue;
            }
            second = second.max(v);
        }
        if second <= 0.0 {
            f64::INFINITY
        } else {
            peak / second
        }
    }
}

/// Normalized cross-power map of two equal-size spectra.
pub(crate) fn cross_power_from_spectra(
    spec1: &Array2<Complex64>,
    spec2: &Array2<Complex64>,
    epsilon: f64,
) -> Array2<f64> {
    let mut cross = Array2::default(spec1.dim());
    // Under the unnormalized-forward / 1/(HW)-inverse convention, conjugating
    // the second spectrum puts the delta at minus the content displacement,
    // so content moved by +d peaks at center - d.
    ndarray::Zip::from(&mut cross).and(spec1).and(spec2).for_each(|out, &a, &b| {
        let prod = a * b.conj();
        *out = prod / (prod.norm() + epsilon);
    });
    fftshift2(&ifft2_real(&cross))
}

/// Whitened phase-correlation map between two frames.
pub fn cross_power(f1: &Frame, f2: &Frame, epsilon: f64) -> Result<CorrelationMap> {
    if f1.dims() != f2.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            f1.height(),
            f1.width(),
            f2.height(),
            f2.width()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let values = cross_power_from_spectra(&fft2(&f1.pixels), &fft2(&f2.pixels), epsilon);
    Ok(CorrelationMap { values, kind: MapKind::T, epsilon })
}

/// Translation map between two CA frames. The whitening makes this map match
/// the raw-frame map for any broadband mask.
pub fn t_map(ca1: &Frame, ca2: &Frame, epsilon: f64) -> Result<CorrelationMap> {
    cross_power(ca1, ca2, epsilon)
}

/// Log-polar resampling grid parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogPolarParams {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_min: f64,
}

impl LogPolarParams {
    /// Defaults: as many bins as the frame height, radii starting above the
    /// lowest frequencies.
    ///
    /// Starting at rho_min = 1 buries rotation/scale peaks: the log grid
    /// spends a third of its rows oversampling spectral radii below 4, where
    /// smooth-content energy and any radially symmetric apodization correlate
    /// statically between frames. Skipping those radii makes integer-bin
    /// recovery reliable at 128x128.
    pub fn for_height(height: usize) -> Self {
        let rho_max = (height / 2) as f64;
        Self { n_rho: height, n_theta: height, rho_min: (rho_max / 4.0).clamp(1.0, 4.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rho < 8 || self.n_theta < 8 {
            return Err(Error::InvalidParameter(format!(
                "log-polar bins {}x{} below minimum 8",
                self.n_rho, self.n_theta
            )));
        }
        if self.rho_min < 1.0 || !self.rho_min.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rho_min must be >= 1, got {}",
                self.rho_min
            )));
        }
        Ok(())
    }

    pub fn rho_max(&self, height: usize, width: usize) -> f64 {
        (height.min(width) / 2) as f64
    }

    /// Log-radius step between adjacent rho bins.
    pub fn delta_log_rho(&self, height: usize, width: usize) -> f64 {
        (self.rho_max(height, width) / self.rho_min).ln() / (self.n_rho as f64 - 1.0)
    }

    /// Angle step between adjacent theta bins; the axis spans [0, pi).
    pub fn delta_theta(&self) -> f64 {
        PI / self.n_theta as f64
    }
}

/// Magnitude spectrum resampled onto a log-polar grid, rows = log-radius,
/// columns = angle.
#[derive(Debug, Clone)]
pub struct LogPolarImage {
    pub values: Array2<f64>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_rho: usize,
    pub n_theta: usize,
}

/// Precomputed sampling coordinates for one (frame size, params) pair.
pub(crate) struct LogPolarPlan {
    params: LogPolarParams,
    rho_max: f64,
    coords: Vec<(f64, f64)>,
}

impl LogPolarPlan {
    pub(crate) fn new(height: usize, width: usize, params: &LogPolarParams) -> Result<Self> {
        params.validate()?;
        let rho_max = params.rho_max(height, width);
        if rho_max <= params.rho_min {
            return Err(Error::InvalidParameter(format!(
                "rho_min {} does not leave room below rho_max {rho_max}",
                params.rho_min
            )));
        }
        let cy = (height / 2) as f64;
        let cx = (width / 2) as f64;
        let dlr = params.delta_log_rho(height, width);
        let dth = params.delta_theta();
        let mut coords = Vec::with_capacity(params.n_rho * params.n_theta);
        for k in 0..params.n_rho {
            let rho = params.rho_min * (k as f64 * dlr).exp();
            for j in 0..params.n_theta {
                let theta = j as f64 * dth;
                coords.push((cy + rho * theta.sin(), cx + rho * theta.cos()));
            }
        }
        Ok(Self { params: *params, rho_max, coords })
    }

    /// Bilinearly sample a centered magnitude grid on the log-polar lattice.
    pub(crate) fn sample(&self, centered_magnitude: &Array2<f64>) -> LogPolarImage {
        let (h, w) = centered_magnitude.dim();
        let n_theta = self.params.n_theta;
        let mut values = Array2::zeros((self.params.n_rho, n_theta));
        for (idx, &(row, col)) in self.coords.iter().enumerate() {
            let v = bilinear_zero(centered_magnitude, row, col, h, w);
            values[(idx / n_theta, idx % n_theta)] = v;
        }
        LogPolarImage {
            values,
            rho_min: self.params.rho_min,
            rho_max: self.rho_max,
            n_rho: self.params.n_rho,
            n_theta,
        }
    }
}

fn bilinear_zero(grid: &Array2<f64>, row: f64, col: f64, h: usize, w: usize) -> f64 {
    if row <= -1.0 || col <= -1.0 || row >= h as f64 || col >= w as f64 {
        return 0.0;
    }
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            grid[(r as usize, c as usize)]
        }
    };
    at(r0, c0) * (1.0 - fr) * (1.0 - fc)
        + at(r0, c0 + 1.0) * (1.0 - fr) * fc
        + at(r0 + 1.0, c0) * fr * (1.0 - fc)
        + at(r0 + 1.0, c0 + 1.0) * fr * fc
}

/// Centered magnitude spectrum with the DC bin zeroed.
///
/// The DC magnitude is orders of magnitude above everything else and bleeds
/// into the low-radius log-polar rows through bilinear sampling; since it is
/// invariant under rotation and scale, leaving it in buries the motion peak
/// under a static one. Zeroing exactly that bin is equivalent to removing the
/// frame mean.
pub(crate) fn centered_magnitude(spec: &Array2<Complex64>) -> Array2<f64> {
    let mut mag = fftshift2(&spec.mapv(|v| v.norm()));
    let (h, w) = mag.dim();
    mag[(h / 2, w / 2)] = 0.0;
    mag
}

/// Centered DFT magnitude of a frame, resampled onto the log-polar grid.
///
/// Theta spans [0, pi): the magnitude spectrum of a real frame is conjugate
/// symmetric, so the other half carries no extra information.
pub fn log_polar_magnitude(f: &Frame, params: &LogPolarParams) -> Result<LogPolarImage> {
    let (h, w) = f.dims();
    let plan = LogPolarPlan::new(h, w, params)?;
    Ok(plan.sample(&centered_magnitude(&fft2(&f.pixels))))
}

/// Rotation/scale map: phase correlation between the log-polar magnitude
/// spectra of the two frames. Rotation shifts the theta axis, scale shifts
/// the log-radius axis.
pub fn rs_map(
    ca1: &Frame,
    ca2: &Frame,
    epsilon: f64,
    params: &LogPolarParams,
) -> Result<CorrelationMap> {
    if ca1.dims() != ca2.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            ca1.height(),
            ca1.width(),
            ca2.height(),
            ca2.width()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let (h, w) = ca1.dims();
    let plan = LogPolarPlan::new(h, w, params)?;
    let lp1 = plan.sample(&centered_magnitude(&fft2(&ca1.pixels)));
    let lp2 = plan.sample(&centered_magnitude(&fft2(&ca2.pixels)));
    let values = cross_power_from_spectra(&fft2(&lp1.values), &fft2(&lp2.values), epsilon);
    Ok(CorrelationMap { values, kind: MapKind::Rs, epsilon })
}

/// Motion recovered from a pair of correlation maps. Convention:
/// `o1(p) = o2(s R p + dp)` with `dp = (dx, dy)` in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub scale: f64,
    pub peak_value: f64,
    pub confidence: f64,
}

/// Integer-bin peak read-out of a T map and an RS map.
pub fn recover_motion(
    map_t: &CorrelationMap,
    map_rs: &CorrelationMap,
    params: &LogPolarParams,
    frame_dims: (usize, usize),
) -> Result<MotionEstimate> {
    for (map, name) in [(map_t, "T"), (map_rs, "RS")] {
        if map.values.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateInput(format!("{name} map is all zero")));
        }
    }
    let (cy, cx) = map_t.center();
    let (pr, pc) = map_t.argmax();
    let dy = cy as f64 - pr as f64;
    let dx = cx as f64 - pc as f64;

    let (rs_cy, rs_cx) = map_rs.center();
    let (rs_pr, rs_pc) = map_rs.argmax();
    let dlr = params.delta_log_rho(frame_dims.0, frame_dims.1);
    let scale = ((rs_pr as f64 - rs_cy as f64) * dlr).exp();
    let mut dtheta = (rs_cx as f64 - rs_pc as f64) * params.delta_theta();
    // Theta is cyclic with period pi; normalize into [-pi/2, pi/2).
    while dtheta < -PI / 2.0 {
        dtheta += PI;
    }
    while dtheta >= PI / 2.0 {
        dtheta -= PI;
    }

    Ok(MotionEstimate {
        dx,
        dy,
        dtheta,
        scale,
        peak_value: map_t.peak_value(),
        confidence: map_t.peak_confidence(),
    })
}
