//! Spectral differential operators, the Leray-Helmholtz projection and the
//! inverse Laplacian for the chemical field.
//!
//! Every operator acts mode-wise on the Fourier coefficients. The projection,
//! divergence and gradient all share one derivative symbol (Nyquist zeroed),
//! so `divergence ∘ leray_project ≡ 0` holds in exact mode algebra and only
//! floating-point rounding survives.

use num_complex::Complex;

use crate::field::{RealField, VectorField};
use crate::grid::{Grid, Spectrum};

/// `∇f` via the spectral derivative.
pub fn gradient(f: &RealField) -> VectorField {
    let spec = f.to_spectrum();
    let (gx, gy) = spectrum_gradient(f.grid(), &spec);
    VectorField::new(
        RealField::from_spectrum(f.grid(), &gx),
        RealField::from_spectrum(f.grid(), &gy),
    )
    .expect("components share the grid")
}

/// `∇·v` via the spectral derivative.
pub fn divergence(v: &VectorField) -> RealField {
    let sx = v.x().to_spectrum();
    let sy = v.y().to_spectrum();
    let div = spectrum_divergence(v.grid(), &sx, &sy);
    RealField::from_spectrum(v.grid(), &div)
}

/// `Δf` with the full `|k|²` multiplier.
pub fn laplacian(f: &RealField) -> RealField {
    let mut spec = f.to_spectrum();
    spectrum_laplacian(f.grid(), &mut spec);
    RealField::from_spectrum(f.grid(), &spec)
}

/// Divergence-free part of `v` (mean mode passes through).
pub fn leray_project(v: &VectorField) -> VectorField {
    let mut sx = v.x().to_spectrum();
    let mut sy = v.y().to_spectrum();
    spectrum_leray(v.grid(), &mut sx, &mut sy);
    VectorField::new(
        RealField::from_spectrum(v.grid(), &sx),
        RealField::from_spectrum(v.grid(), &sy),
    )
    .expect("components share the grid")
}

/// Chemical concentration in the zero-mean gauge: `-Δc = n - mean(n)`,
/// `mean(c) = 0`.
pub fn solve_chemical(n: &RealField) -> RealField {
    let mut spec = n.to_spectrum();
    spectrum_solve_chemical(n.grid(), &mut spec);
    RealField::from_spectrum(n.grid(), &spec)
}

/// Two-thirds dealiasing as a field operation.
pub fn dealiased(f: &RealField) -> RealField {
    let mut spec = f.to_spectrum();
    f.grid().dealias(&mut spec);
    RealField::from_spectrum(f.grid(), &spec)
}

/// Relative spectral divergence: `max|∇·v| / max|v|` (0 for a zero field).
pub fn relative_divergence(v: &VectorField) -> f64 {
    let m = v.max_abs();
    if m == 0.0 {
        return 0.0;
    }
    divergence(v).max_abs() / m
}

// ---- mode-space primitives ------------------------------------------------

pub fn spectrum_gradient(grid: &Grid, spec: &Spectrum) -> (Spectrum, Spectrum) {
    let d = grid.deriv_symbol();
    let mut gx = spec.clone();
    let mut gy = spec.clone();
    for ((i, j), v) in spec.indexed_iter() {
        gx[(i, j)] = Complex::new(0.0, d[i]) * v;
        gy[(i, j)] = Complex::new(0.0, d[j]) * v;
    }
    (gx, gy)
}

pub fn spectrum_divergence(grid: &Grid, sx: &Spectrum, sy: &Spectrum) -> Spectrum {
    let d = grid.deriv_symbol();
    let mut out = sx.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = Complex::new(0.0, d[i]) * sx[(i, j)] + Complex::new(0.0, d[j]) * sy[(i, j)];
    }
    out
}

pub fn spectrum_laplacian(grid: &Grid, spec: &mut Spectrum) {
    for ((i, j), v) in spec.indexed_iter_mut() {
        *v *= -grid.ksq(i, j);
    }
}

/// Mode-wise `v̂ - k (k·v̂)/|k|²` with the derivative symbol as `k`.
pub fn spectrum_leray(grid: &Grid, sx: &mut Spectrum, sy: &mut Spectrum) {
    let d = grid.deriv_symbol();
    let n = grid.points_per_side();
    for i in 0..n {
        for j in 0..n {
            let (kx, ky) = (d[i], d[j]);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let dot = sx[(i, j)] * kx + sy[(i, j)] * ky;
            sx[(i, j)] -= dot * (kx / k2);
            sy[(i, j)] -= dot * (ky / k2);
        }
    }
}

pub fn spectrum_solve_chemical(grid: &Grid, spec: &mut Spectrum) {
    let n = grid.points_per_side();
    for i in 0..n {
        for j in 0..n {
            let k2 = grid.ksq(i, j);
            if k2 == 0.0 {
                spec[(i, j)] = Complex::new(0.0, 0.0);
            } else {
                spec[(i, j)] /= k2;
            }
        }
    }
}
