//! Periodic-box grid and the discrete Fourier substrate.
//!
//! A [`Grid`] fixes the square torus `[0, L)²` sampled on `N × N` uniform
//! points and carries the wavenumber tables, the two-thirds dealias mask and
//! cached FFT plans. Spectra use the convention
//!
//! ```text
//! f(x) = Σ_m  f̂(m) e^{i k·x},    k = 2π m / L,   m ∈ {-N/2, …, N/2-1}²
//! ```
//!
//! so the `(0,0)` coefficient is the mean of the field and the forward
//! transform carries the `1/N²` normalization. First-derivative symbols zero
//! the Nyquist mode so that derivatives of real fields stay real and the
//! divergence / projection algebra closes exactly; the Laplacian and the heat
//! multipliers keep the full `|k|²`.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Complex Fourier coefficients of a real field, in FFT mode order.
pub type Spectrum = Array2<Complex<f64>>;

/// Square periodic grid with cached transform plans.
pub struct Grid {
    n: usize,
    length: f64,
    modes: Vec<i64>,
    wavenumbers: Vec<f64>,
    deriv: Vec<f64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("points_per_side", &self.n)
            .field("box_length", &self.length)
            .finish()
    }
}

/// Build a grid behind an `Arc` so fields can share it cheaply.
pub fn make_grid(points_per_side: usize, box_length: f64) -> Result<Arc<Grid>> {
    Grid::new(points_per_side, box_length).map(Arc::new)
}

impl Grid {
    pub fn new(points_per_side: usize, box_length: f64) -> Result<Self> {
        if points_per_side < 16 || points_per_side % 2 != 0 {
            return Err(Error::config(format!(
                "points_per_side must be an even integer >= 16, got {points_per_side}"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::config(format!(
                "box_length must be a positive real, got {box_length}"
            )));
        }
        let n = points_per_side;
        let base = 2.0 * std::f64::consts::PI / box_length;
        let modes: Vec<i64> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let wavenumbers: Vec<f64> = modes.iter().map(|&m| base * m as f64).collect();
        let deriv: Vec<f64> = modes
            .iter()
            .map(|&m| if m == -(n as i64) / 2 { 0.0 } else { base * m as f64 })
            .collect();
        // Two-thirds rule: drop |m| > N/3 on either axis.
        let keep: Vec<bool> = modes.iter().map(|&m| 3 * m.unsigned_abs() <= n as u64).collect();

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft(n, FftDirection::Forward);
        let inv = planner.plan_fft(n, FftDirection::Inverse);

        Ok(Grid { n, length: box_length, modes, wavenumbers, deriv, keep, fwd, inv })
    }

    pub fn points_per_side(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    /// Grid spacing `h = L/N`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight of one cell, `h²`.
    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// Physical coordinates along one axis.
    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.spacing()).collect()
    }

    /// Integer mode indices in FFT order.
    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    /// Scaled wavenumbers `2π m / L` in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// First-derivative symbol (wavenumber with the Nyquist mode zeroed).
    pub fn deriv_symbol(&self) -> &[f64] {
        &self.deriv
    }

    /// Per-axis dealias keep flags (two-thirds rule).
    pub fn dealias_keep(&self) -> &[bool] {
        &self.keep
    }

    /// `|k|²` of mode `(i, j)` with the full (Nyquist-included) wavenumbers.
    pub fn ksq(&self, i: usize, j: usize) -> f64 {
        self.wavenumbers[i] * self.wavenumbers[i] + self.wavenumbers[j] * self.wavenumbers[j]
    }

    /// Forward transform: physical values to normalized Fourier coefficients.
    pub fn forward(&self, values: &Array2<f64>) -> Spectrum {
        let mut buf = values.mapv(|v| Complex::new(v, 0.0));
        self.fft2(&mut buf, true);
        let scale = 1.0 / (self.n * self.n) as f64;
        buf.mapv_inplace(|c| c * scale);
        buf
    }

    /// Inverse transform back to physical values.
    pub fn inverse(&self, spec: &Spectrum) -> Array2<f64> {
        let mut buf = spec.clone();
        self.fft2(&mut buf, false);
        buf.mapv(|c| c.re)
    }

    /// Zero every mode with `|m_i| > N/3` on either axis, in place.
    pub fn dealias(&self, spec: &mut Spectrum) {
        for ((i, j), v) in spec.indexed_iter_mut() {
            if !self.keep[i] || !self.keep[j] {
                *v = Complex::new(0.0, 0.0);
            }
        }
    }

    fn fft2(&self, buf: &mut Spectrum, forward: bool) {
        let fft = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for mut row in buf.rows_mut() {
            fft.process_with_scratch(row.as_slice_mut().expect("contiguous row"), &mut scratch);
        }
        let n = self.n;
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[(i, j)];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for i in 0..n {
                buf[(i, j)] = col[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(15, 2.0 * std::f64::consts::PI).is_err());
        assert!(Grid::new(14, 1.0).is_err());
        assert!(Grid::new(64, 0.0).is_err());
        assert!(Grid::new(64, -1.0).is_err());
        assert!(Grid::new(64, 2.0 * std::f64::consts::PI).is_ok());
    }

    #[test]
    fn mode_table_matches_fft_order() {
        let g = Grid::new(64, 2.0 * std::f64::consts::PI).unwrap();
        // L = 2π scales wavenumbers by exactly 1.
        assert_eq!(g.modes()[0], 0);
        assert_eq!(g.modes()[1], 1);
        assert_eq!(g.modes()[31], 31);
        assert_eq!(g.modes()[32], -32);
        assert_eq!(g.modes()[63], -1);
        assert_relative_eq!(g.wavenumbers()[1], 1.0, max_relative = 1e-15);
        // L = 4π halves the smallest positive wavenumber.
        let g2 = Grid::new(64, 4.0 * std::f64::consts::PI).unwrap();
        assert_relative_eq!(g2.wavenumbers()[1], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn dealias_mask_is_two_thirds() {
        let g = Grid::new(64, 1.0).unwrap();
        for (j, &m) in g.modes().iter().enumerate() {
            assert_eq!(g.dealias_keep()[j], m.abs() * 3 <= 64, "mode {m}");
        }
        // N/3 = 21.33 for N = 64: |m| = 21 kept, |m| = 22 dropped.
        let kept: Vec<i64> =
            g.modes().iter().copied().filter(|&m| g.dealias_keep()[(m.rem_euclid(64)) as usize]).collect();
        assert!(kept.contains(&21) && kept.contains(&-21));
        assert!(!kept.contains(&22) && !kept.contains(&-22));
    }

    #[test]
    fn round_trip_is_machine_accurate() {
        let g = Grid::new(32, 3.7).unwrap();
        let mut rng = 12345u64;
        let mut next = || {
            // xorshift, good enough for filling a test field
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as f64 / u64::MAX as f64) - 0.5
        };
        let values = Array2::from_shape_fn((32, 32), |_| next());
        let spec = g.forward(&values);
        let back = g.inverse(&spec);
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in values.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        // Parseval-consistent normalization: coefficient (0,0) is the mean.
        let mean = values.sum() / (32.0 * 32.0);
        assert_relative_eq!(spec[(0, 0)].re, mean, max_relative = 1e-12);
    }

    #[test]
    fn single_mode_has_unit_coefficient() {
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::new(32, l).unwrap();
        let xs = g.coords();
        let values = Array2::from_shape_fn((32, 32), |(i, _)| (xs[i]).cos());
        let spec = g.forward(&values);
        // cos(x) = (e^{ix} + e^{-ix})/2: coefficient 1/2 at m = (±1, 0).
        assert_relative_eq!(spec[(1, 0)].re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(spec[(31, 0)].re, 0.5, max_relative = 1e-12);
        assert!(spec[(2, 0)].norm() < 1e-13);
    }
}
