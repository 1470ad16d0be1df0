//! Free-space (whole-plane) Newtonian potential and its gradient by direct
//! kernel quadrature, evaluated with a zero-padded FFT convolution.
//!
//! The periodic Poisson solver differs from the plane solution by a harmonic
//! correction, so the inequality checkers that are genuinely plane statements
//! (log-HLS interaction energy, the gradient estimate) use these routines on
//! data supported well inside the box. The padded convolution reproduces the
//! plain quadrature sum `Σ_j h² K(x_i - x_j) n_j` exactly; the log kernel's
//! singular cell is replaced by its equal-area-disk average and the odd
//! gradient kernel's by zero.

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{RealField, VectorField};

/// `c_free(x) = -(1/2π) ∫ ln|x-y| n(y) dy` by quadrature.
pub fn free_potential(n: &RealField) -> RealField {
    let grid = n.grid();
    let h = grid.spacing();
    let rho = h / std::f64::consts::PI.sqrt();
    let self_weight = (1.0 - 2.0 * rho.ln()) / (4.0 * std::f64::consts::PI);
    let kernel = |dx: f64, dy: f64| {
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            self_weight
        } else {
            -r2.ln() / (4.0 * std::f64::consts::PI)
        }
    };
    let out = padded_convolution(n, kernel);
    RealField::from_values(grid, out).expect("shape preserved")
}

/// `∇ c_free(x) = -(1/2π) ∫ (x-y)/|x-y|² n(y) dy` by quadrature.
pub fn free_gradient(n: &RealField) -> VectorField {
    let grid = n.grid();
    let gx = padded_convolution(n, |dx, dy| {
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            0.0
        } else {
            -dx / (2.0 * std::f64::consts::PI * r2)
        }
    });
    let gy = padded_convolution(n, |dx, dy| {
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            0.0
        } else {
            -dy / (2.0 * std::f64::consts::PI * r2)
        }
    });
    VectorField::new(
        RealField::from_values(grid, gx).expect("shape preserved"),
        RealField::from_values(grid, gy).expect("shape preserved"),
    )
    .expect("components share the grid")
}

/// Check that essentially all mass sits inside the central half of the box;
/// the plane-kernel quadrature is meaningless otherwise.
pub fn require_central_support(n: &RealField, tag: &str) -> Result<()> {
    let grid = n.grid();
    let l = grid.box_length();
    let xs = grid.coords();
    let total: f64 = n.values().iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Ok(());
    }
    let mut outside = 0.0;
    for ((i, j), v) in n.values().indexed_iter() {
        let dx = xs[i] - l / 2.0;
        let dy = xs[j] - l / 2.0;
        if dx.abs() > l / 4.0 || dy.abs() > l / 4.0 {
            outside += v.abs();
        }
    }
    if outside > 1e-6 * total {
        return Err(Error::contract(format!(
            "{tag}: {:.3e} of the data mass lies outside the central half of the box",
            outside / total
        )));
    }
    Ok(())
}

/// Exact linear convolution `Σ_j h² K(x_i - x_j) n_j` through a 2N-padded
/// circular convolution.
fn padded_convolution(n: &RealField, kernel: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let grid = n.grid();
    let npts = grid.points_per_side();
    let h = grid.spacing();
    let m = 2 * npts;

    let mut data = Array2::<Complex<f64>>::zeros((m, m));
    for ((i, j), v) in n.values().indexed_iter() {
        data[(i, j)] = Complex::new(*v, 0.0);
    }
    // Displacement d ∈ [-(N-1), N-1] placed at index d mod 2N.
    let mut kern = Array2::<Complex<f64>>::zeros((m, m));
    for di in -(npts as i64 - 1)..=(npts as i64 - 1) {
        for dj in -(npts as i64 - 1)..=(npts as i64 - 1) {
            let ii = di.rem_euclid(m as i64) as usize;
            let jj = dj.rem_euclid(m as i64) as usize;
            kern[(ii, jj)] = Complex::new(kernel(di as f64 * h, dj as f64 * h), 0.0);
        }
    }

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft(m, FftDirection::Forward);
    let inv = planner.plan_fft(m, FftDirection::Inverse);
    let fft2 = |a: &mut Array2<Complex<f64>>, forward: bool| {
        let fft = if forward { &fwd } else { &inv };
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for mut row in a.rows_mut() {
            fft.process_with_scratch(row.as_slice_mut().expect("contiguous"), &mut scratch);
        }
        let mut col = vec![Complex::new(0.0, 0.0); m];
        for j in 0..m {
            for i in 0..m {
                col[i] = a[(i, j)];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for i in 0..m {
                a[(i, j)] = col[i];
            }
        }
    };

    fft2(&mut data, true);
    fft2(&mut kern, true);
    data.zip_mut_with(&kern, |a, &b| *a *= b);
    fft2(&mut data, false);

    let scale = h * h / (m * m) as f64;
    Array2::from_shape_fn((npts, npts), |(i, j)| data[(i, j)].re * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn padded_convolution_matches_direct_sum() {
        let g = make_grid(16, 4.0).unwrap();
        let n = RealField::from_fn(&g, |x, y| {
            (-((x - 2.0).powi(2) + (y - 2.3).powi(2)) / 0.3).exp() + 0.1 * (x * y).sin()
        });
        let fast = free_potential(&n);
        // Direct O(N⁴) sum as the oracle.
        let h = g.spacing();
        let rho = h / std::f64::consts::PI.sqrt();
        let self_w = (1.0 - 2.0 * rho.ln()) / (4.0 * std::f64::consts::PI);
        let xs = g.coords();
        let np = g.points_per_side();
        let mut max_err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..np {
            for j in 0..np {
                let mut acc = 0.0;
                for ii in 0..np {
                    for jj in 0..np {
                        let dx = xs[i] - xs[ii];
                        let dy = xs[j] - xs[jj];
                        let r2 = dx * dx + dy * dy;
                        let k = if r2 == 0.0 {
                            self_w
                        } else {
                            -r2.ln() / (4.0 * std::f64::consts::PI)
                        };
                        acc += k * n.values()[(ii, jj)];
                    }
                }
                acc *= h * h;
                max_err = max_err.max((acc - fast.values()[(i, j)]).abs());
                scale = scale.max(acc.abs());
            }
        }
        assert!(max_err <= 1e-11 * scale.max(1e-12), "convolution mismatch {max_err}");
    }

    #[test]
    fn gradient_kernel_matches_analytic_gaussian() {
        // |∇c| of a mass-M width-σ Gaussian is (M/2πr)(1 - e^{-r²/2σ²}).
        let l = 16.0 * std::f64::consts::PI;
        let g = make_grid(256, l).unwrap();
        let sigma = 1.0f64;
        let mass = 2.0;
        let c0 = l / 2.0;
        let amp = mass / (2.0 * std::f64::consts::PI * sigma * sigma);
        let n = RealField::from_fn(&g, |x, y| {
            let r2 = (x - c0).powi(2) + (y - c0).powi(2);
            amp * (-r2 / (2.0 * sigma * sigma)).exp()
        });
        let grad = free_gradient(&n);
        let mag = grad.magnitude();
        let xs = g.coords();
        let mut max_rel = 0.0f64;
        for ((i, j), v) in mag.values().indexed_iter() {
            let r = ((xs[i] - c0).powi(2) + (xs[j] - c0).powi(2)).sqrt();
            if r < sigma || r > 4.0 * sigma {
                continue;
            }
            let exact = mass / (2.0 * std::f64::consts::PI * r)
                * (1.0 - (-r * r / (2.0 * sigma * sigma)).exp());
            max_rel = max_rel.max((v - exact).abs() / exact);
        }
        assert!(max_rel <= 1e-2, "free gradient error {max_rel}");
    }

    #[test]
    fn central_support_guard() {
        let l = 8.0;
        let g = make_grid(32, l).unwrap();
        let centered = RealField::from_fn(&g, |x, y| {
            (-((x - 4.0).powi(2) + (y - 4.0).powi(2)) / 0.2).exp()
        });
        assert!(require_central_support(&centered, "test").is_ok());
        let offset = RealField::from_fn(&g, |x, y| {
            (-((x - 7.0).powi(2) + (y - 4.0).powi(2)) / 0.2).exp()
        });
        assert!(require_central_support(&offset, "test").is_err());
    }
}
