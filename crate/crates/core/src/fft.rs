//! 2D DFT helpers with one fixed convention used everywhere in the crate:
//! forward transform unnormalized, inverse scaled by `1/(H*W)`.
//!
//! Under this convention the pointwise product of two forward spectra followed
//! by the inverse transform equals the unnormalized circular convolution sum
//! `(f * g)(p) = sum_k f(k) g(p - k)`.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Transform every row in place, then every column (via transpose).
fn fft2_inplace(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (h, w) = data.dim();

    let row_fft = plan(w, direction);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for mut row in data.rows_mut() {
        row_fft.process_with_scratch(row.as_slice_mut().expect("contiguous row"), &mut scratch);
    }

    let col_fft = plan(h, direction);
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    let mut t = data.t().as_standard_layout().into_owned();
    for mut row in t.rows_mut() {
        col_fft.process_with_scratch(row.as_slice_mut().expect("contiguous row"), &mut scratch);
    }
    *data = t.t().as_standard_layout().into_owned();
}

/// Forward 2D DFT of a real grid, unnormalized.
pub fn fft2(input: &Array2<f64>) -> Array2<Complex64> {
    let mut data = input.mapv(|v| Complex64::new(v, 0.0));
    fft2_inplace(&mut data, FftDirection::Forward);
    data
}

/// Forward 2D DFT of a complex grid, unnormalized.
pub fn fft2_complex(input: &Array2<Complex64>) -> Array2<Complex64> {
    let mut data = input.clone();
    fft2_inplace(&mut data, FftDirection::Forward);
    data
}

/// Inverse 2D DFT, scaled by `1/(H*W)`.
pub fn ifft2(input: &Array2<Complex64>) -> Array2<Complex64> {
    let mut data = input.clone();
    fft2_inplace(&mut data, FftDirection::Inverse);
    let scale = 1.0 / (data.len() as f64);
    data.mapv_inplace(|v| v * scale);
    data
}

/// Real part of the inverse 2D DFT, scaled by `1/(H*W)`.
pub fn ifft2_real(input: &Array2<Complex64>) -> Array2<f64> {
    let mut data = input.clone();
    fft2_inplace(&mut data, FftDirection::Inverse);
    let scale = 1.0 / (data.len() as f64);
    data.mapv(|v| v.re * scale)
}

/// Circularly roll a grid by `(dr, dc)`: output[(i+dr)%h][(j+dc)%w] = input[i][j].
pub fn roll2<T: Copy + Default>(input: &Array2<T>, dr: usize, dc: usize) -> Array2<T> {
    let (h, w) = input.dim();
    let mut out = Array2::default((h, w));
    for i in 0..h {
        let ir = (i + dr) % h;
        for j in 0..w {
            out[(ir, (j + dc) % w)] = input[(i, j)];
        }
    }
    out
}

/// Move the zero-frequency bin from index (0,0) to the grid center (H/2, W/2).
pub fn fftshift2<T: Copy + Default>(input: &Array2<T>) -> Array2<T> {
    let (h, w) = input.dim();
    roll2(input, h / 2, w / 2)
}

/// Inverse of [`fftshift2`].
pub fn ifftshift2<T: Copy + Default>(input: &Array2<T>) -> Array2<T> {
    let (h, w) = input.dim();
    roll2(input, h - h / 2, w - w / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_identity() {
        let x = Array2::from_shape_fn((16, 12), |(i, j)| (i as f64 * 0.37 + j as f64 * 1.1).sin());
        let back = ifft2_real(&fft2(&x));
        let err = (&back - &x).mapv(f64::abs).iter().cloned().fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn forward_is_unnormalized() {
        // DC bin of the forward transform must equal the plain sum.
        let x = Array2::from_elem((8, 8), 0.5);
        let spec = fft2(&x);
        assert!((spec[(0, 0)].re - 32.0).abs() < 1e-12);
        assert!(spec[(0, 0)].im.abs() < 1e-12);
    }

    #[test]
    fn fftshift_centers_dc() {
        let x = array![[1.0, 0.0], [0.0, 0.0]];
        let s = fftshift2(&x);
        assert_eq!(s[(1, 1)], 1.0);
        let back = ifftshift2(&s);
        assert_eq!(back, x);
    }

    #[test]
    fn shift_round_trip_odd_dims() {
        let x = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64);
        assert_eq!(ifftshift2(&fftshift2(&x)), x);
    }
}
