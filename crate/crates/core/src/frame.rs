//! Single-channel intensity frames and the geometric transforms the rest of
//! the crate builds on.
//!
//! Scene frames hold values in `[0, 1]`; CA frames may exceed 1 before
//! normalization. All transforms use bilinear sampling with zero outside the
//! source grid, and "center" always means the continuous point
//! `((H-1)/2, (W-1)/2)`.

use crate::error::{Error, Result};
use ndarray::Array2;

pub const MIN_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pixels: Array2<f64>,
}

impl Frame {
    /// Wrap a pixel grid, enforcing the minimum frame size.
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h < MIN_DIM || w < MIN_DIM {
            return Err(Error::InvalidParameter(format!(
                "frame dimensions {h}x{w} below minimum {MIN_DIM}"
            )));
        }
        Ok(Self { pixels })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(Array2::from_shape_fn((height, width), |(r, c)| f(r, c)))
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(Array2::zeros((height, width)))
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.mean().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Scale all pixels by a constant.
    pub fn scaled(&self, gain: f64) -> Frame {
        Frame { pixels: self.pixels.mapv(|v| v * gain) }
    }

    /// Circular shift: content moves down by `dy` rows and right by `dx` columns.
    pub fn shift_circular(&self, dy: i64, dx: i64) -> Frame {
        let (h, w) = self.dims();
        let pixels = Array2::from_shape_fn((h, w), |(r, c)| {
            let sr = (r as i64 - dy).rem_euclid(h as i64) as usize;
            let sc = (c as i64 - dx).rem_euclid(w as i64) as usize;
            self.pixels[(sr, sc)]
        });
        Frame { pixels }
    }

    /// Mirror the frame top-to-bottom.
    pub fn flip_vertical(&self) -> Frame {
        let (h, w) = self.dims();
        let pixels = Array2::from_shape_fn((h, w), |(r, c)| self.pixels[(h - 1 - r, c)]);
        Frame { pixels }
    }

    /// Bilinear sample at a continuous (row, col); zero outside the grid.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let (h, w) = self.dims();
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
                self.pixels[(r as usize, c as usize)]
            }
        };
        at(r0, c0) * (1.0 - fr) * (1.0 - fc)
            + at(r0, c0 + 1.0) * (1.0 - fr) * fc
            + at(r0 + 1.0, c0) * fr * (1.0 - fc)
            + at(r0 + 1.0, c0 + 1.0) * fr * fc
    }

    /// Bilinear resize to `height x width`.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Frame> {
        if height < MIN_DIM || width < MIN_DIM {
            return Err(Error::InvalidParameter(format!(
                "resize target {height}x{width} below minimum {MIN_DIM}"
            )));
        }
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let (h, w) = self.dims();
        let sy = h as f64 / height as f64;
        let sx = w as f64 / width as f64;
        let pixels = Array2::from_shape_fn((height, width), |(r, c)| {
            // Map output pixel centers onto input pixel centers.
            let src_r = (r as f64 + 0.5) * sy - 0.5;
            let src_c = (c as f64 + 0.5) * sx - 0.5;
            self.sample_bilinear(src_r.clamp(0.0, (h - 1) as f64), src_c.clamp(0.0, (w - 1) as f64))
        });
        Ok(Frame { pixels })
    }

    /// Crop a `size x size` window whose top-left corner is at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, size: usize) -> Result<Frame> {
        let (h, w) = self.dims();
        if top + size > h || left + size > w {
            return Err(Error::InvalidParameter(format!(
                "crop {size} at ({top},{left}) exceeds frame {h}x{w}"
            )));
        }
        let pixels =
            Array2::from_shape_fn((size, size), |(r, c)| self.pixels[(top + r, left + c)]);
        Frame::new(pixels)
    }

    /// Crop the central `size x size` window.
    pub fn center_crop(&self, size: usize) -> Result<Frame> {
        let (h, w) = self.dims();
        if size > h || size > w {
            return Err(Error::InvalidParameter(format!(
                "center crop {size} exceeds frame {h}x{w}"
            )));
        }
        self.crop((h - size) / 2, (w - size) / 2, size)
    }

    /// Rotate content about the frame center by `angle` radians.
    ///
    /// With centered coordinates `(x, y) = (col - cx, row - cy)`, the output
    /// satisfies `out(p) = in(R(-angle) p)`, so `in(p) = out(R(angle) p)`.
    pub fn rotate_about_center(&self, angle: f64) -> Frame {
        let (h, w) = self.dims();
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let (sin, cos) = angle.sin_cos();
        let pixels = Array2::from_shape_fn((h, w), |(r, c)| {
            let x = c as f64 - cx;
            let y = r as f64 - cy;
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            self.sample_bilinear(sy + cy, sx + cx)
        });
        Frame { pixels }
    }

    /// Magnify content about the frame center by `scale` (> 1 zooms in).
    ///
    /// The output satisfies `out(p) = in(p / scale)`, so `in(p) = out(scale p)`.
    pub fn scale_about_center(&self, scale: f64) -> Result<Frame> {
        if scale <= 0.0 || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let (h, w) = self.dims();
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let inv = 1.0 / scale;
        let pixels = Array2::from_shape_fn((h, w), |(r, c)| {
            let x = (c as f64 - cx) * inv;
            let y = (r as f64 - cy) * inv;
            self.sample_bilinear(y + cy, x + cx)
        });
        Ok(Frame { pixels })
    }
}
