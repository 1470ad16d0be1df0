//! Exact spectral application of the heat semigroup `e^{tΔ}`, the Stokes
//! semigroup `e^{-tA}` and fractional powers `A^β`, plus the Lᵖ-Lᵠ decay-rate
//! verification.
//!
//! On the torus the Helmholtz projection commutes with the Laplacian mode by
//! mode, so the Stokes semigroup is implemented as projected heat flow; there
//! is no splitting error in the linear part.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{RealField, VectorField};
use crate::grid::{Grid, Spectrum};
use crate::ops;

/// Per-step multiplier tables for a fixed `(grid, dt)` pair. Rebuild whenever
/// either changes.
#[derive(Debug)]
pub struct PropagatorCache {
    grid: Arc<Grid>,
    dt: f64,
    heat: Array2<f64>,
    phi1: Array2<f64>,
}

impl PropagatorCache {
    pub fn new(grid: &Arc<Grid>, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::config(format!("propagator dt must be >= 0, got {dt}")));
        }
        let n = grid.points_per_side();
        let heat = Array2::from_shape_fn((n, n), |(i, j)| (-grid.ksq(i, j) * dt).exp());
        let phi1 = Array2::from_shape_fn((n, n), |(i, j)| {
            let z = -grid.ksq(i, j) * dt;
            if z == 0.0 {
                1.0
            } else {
                z.exp_m1() / z
            }
        });
        Ok(PropagatorCache { grid: grid.clone(), dt, heat, phi1 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `e^{-|k|² dt}` per mode; the zero mode is exactly 1.
    pub fn heat_multipliers(&self) -> &Array2<f64> {
        &self.heat
    }

    pub fn matches(&self, grid: &Arc<Grid>, dt: f64) -> bool {
        Arc::ptr_eq(&self.grid, grid) && self.dt == dt
    }

    pub fn apply_heat(&self, spec: &mut Spectrum) {
        spec.zip_mut_with(&self.heat, |c, &m| *c *= m);
    }

    /// `φ₁(-|k|² dt) = (1 - e^{-|k|² dt})/(|k|² dt)` per mode; the exact
    /// subinterval average of the semigroup kernel (1 at k = 0).
    pub fn phi1_multipliers(&self) -> &Array2<f64> {
        &self.phi1
    }

    pub fn apply_phi1(&self, spec: &mut Spectrum) {
        spec.zip_mut_with(&self.phi1, |c, &m| *c *= m);
    }
}

fn heat_multiply(grid: &Grid, spec: &mut Spectrum, t: f64) {
    for ((i, j), v) in spec.indexed_iter_mut() {
        *v *= (-grid.ksq(i, j) * t).exp();
    }
}

/// `e^{tΔ} f` by mode-wise multiplication with `e^{-|k|² t}`.
pub fn heat_propagate(f: &RealField, t: f64) -> Result<RealField> {
    if !(t >= 0.0) {
        return Err(Error::config(format!("heat_propagate needs t >= 0, got {t}")));
    }
    let mut spec = f.to_spectrum();
    heat_multiply(f.grid(), &mut spec, t);
    Ok(RealField::from_spectrum(f.grid(), &spec))
}

/// Divergence tolerance accepted by [`stokes_propagate`], relative to the
/// field max-norm.
pub const STOKES_DIV_TOL: f64 = 1e-10;

/// `e^{-tA} v` for divergence-free `v`: projected componentwise heat flow.
pub fn stokes_propagate(v: &VectorField, t: f64) -> Result<VectorField> {
    if !(t >= 0.0) {
        return Err(Error::config(format!("stokes_propagate needs t >= 0, got {t}")));
    }
    let rel_div = ops::relative_divergence(v);
    if rel_div > STOKES_DIV_TOL {
        return Err(Error::contract(format!(
            "stokes_propagate input is not divergence-free: relative divergence {rel_div:.3e}"
        )));
    }
    let mut sx = v.x().to_spectrum();
    let mut sy = v.y().to_spectrum();
    heat_multiply(v.grid(), &mut sx, t);
    heat_multiply(v.grid(), &mut sy, t);
    ops::spectrum_leray(v.grid(), &mut sx, &mut sy);
    Ok(VectorField::new(
        RealField::from_spectrum(v.grid(), &sx),
        RealField::from_spectrum(v.grid(), &sy),
    )
    .expect("components share the grid"))
}

/// `A^β v` with the multiplier `|k|^{2β}`; the zero mode maps to 0 for β > 0.
pub fn fractional_power(v: &VectorField, beta: f64) -> Result<VectorField> {
    if !(0.0..=1.5).contains(&beta) {
        return Err(Error::config(format!("beta must lie in [0, 3/2], got {beta}")));
    }
    if beta == 0.0 {
        return Ok(v.clone());
    }
    let grid = v.grid();
    let mut sx = v.x().to_spectrum();
    let mut sy = v.y().to_spectrum();
    for spec in [&mut sx, &mut sy] {
        for ((i, j), c) in spec.indexed_iter_mut() {
            let k2 = grid.ksq(i, j);
            *c *= if k2 == 0.0 { 0.0 } else { k2.powf(beta) };
        }
    }
    Ok(VectorField::new(
        RealField::from_spectrum(grid, &sx),
        RealField::from_spectrum(grid, &sy),
    )
    .expect("components share the grid"))
}

/// Result of a decay-slope fit.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub slope: f64,
    pub expected: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Fit the decay exponent of `‖e^{tΔ} f_t‖_{Lᵖ} / ‖f_t‖_{Lᵠ}` over a
/// geometric `t` range, where `f_t` is a unit-mass Gaussian bump whose width
/// tracks `t` (the near-extremal datum for the Lᵖ-Lᵠ bound at that scale).
/// The fitted slope approaches `-(1/q - 1/p)`.
///
/// The window is rejected when the smallest bump is unresolved or the largest
/// propagated bump feels the torus.
pub fn verify_decay_exponent(
    grid: &Arc<Grid>,
    q_in: f64,
    p_out: f64,
    t_range: &[f64],
) -> Result<DecayFit> {
    if !(1.0 <= q_in && q_in <= p_out) {
        return Err(Error::config(format!(
            "need 1 <= q <= p, got q = {q_in}, p = {p_out}"
        )));
    }
    if t_range.len() < 3 {
        return Err(Error::config("need at least 3 samples to fit a slope".to_string()));
    }
    let h = grid.spacing();
    let l = grid.box_length();
    let t_min = t_range.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = t_range.iter().cloned().fold(0.0f64, f64::max);
    // Bump std at scale t is sqrt(2t); propagated std is sqrt(4t).
    if (2.0 * t_min).sqrt() < 3.0 * h {
        return Err(Error::InvalidWindow(format!(
            "t_min = {t_min:.3e} puts the bump below 3 grid cells"
        )));
    }
    if (4.0 * t_max).sqrt() > l / 8.0 {
        return Err(Error::InvalidWindow(format!(
            "t_max = {t_max:.3e} reaches torus saturation on L = {l:.3}"
        )));
    }

    let c0 = l / 2.0;
    let mut samples = Vec::with_capacity(t_range.len());
    for &t in t_range {
        // Heat kernel of width parameter a = t, unit mass, centered.
        let a = t;
        let datum = RealField::from_fn(grid, |x, y| {
            let r2 = (x - c0).powi(2) + (y - c0).powi(2);
            (4.0 * std::f64::consts::PI * a).recip() * (-r2 / (4.0 * a)).exp()
        });
        let propagated = heat_propagate(&datum, t)?;
        let ratio = propagated.lp_norm(p_out) / datum.lp_norm(q_in);
        samples.push((t, ratio));
    }
    let slope = log_log_slope(&samples);
    Ok(DecayFit { slope, expected: -(1.0 / q_in - 1.0 / p_out), samples })
}

fn log_log_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in samples {
        let x = t.ln();
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Geometric sequence helper for decay windows.
pub fn geometric_range(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && t_min > 0.0 && t_max > t_min);
    let ratio = (t_max / t_min).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| t_min * ratio.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::state::{make_initial_state, InitialData};
    use approx::assert_relative_eq;

    #[test]
    fn eigenmode_decays_exactly() {
        let l = 2.0 * std::f64::consts::PI;
        let g = make_grid(32, l).unwrap();
        let f = RealField::from_fn(&g, |x, _| x.sin());
        let out = heat_propagate(&f, 1.0).unwrap();
        let expected = f.scaled((-1.0f64).exp());
        let err = out.zip_with(&expected, |a, b| (a - b).abs()).max_abs();
        assert!(err <= 1e-13);
    }

    #[test]
    fn t_zero_is_identity() {
        let g = make_grid(32, 3.0).unwrap();
        let f = RealField::from_fn(&g, |x, y| (2.1 * x).cos() + (4.2 * y).sin());
        let out = heat_propagate(&f, 0.0).unwrap();
        let err = out.zip_with(&f, |a, b| (a - b).abs()).max_abs();
        assert!(err <= 1e-13 * f.max_abs());
        assert!(heat_propagate(&f, -1.0).is_err());
    }

    #[test]
    fn semigroup_law() {
        let g = make_grid(48, 4.0).unwrap();
        let f = RealField::from_fn(&g, |x, y| (3.0 * x).sin() * (1.5 * y).cos() + 0.3);
        let two_step = heat_propagate(&heat_propagate(&f, 0.3).unwrap(), 0.45).unwrap();
        let one_step = heat_propagate(&f, 0.75).unwrap();
        let err = two_step.zip_with(&one_step, |a, b| (a - b).abs()).max_abs();
        assert!(err <= 1e-13 * f.max_abs(), "semigroup law violation {err}");
    }

    #[test]
    fn mass_is_invariant() {
        let g = make_grid(32, 5.0).unwrap();
        let f = RealField::from_fn(&g, |x, y| 1.0 + (1.3 * x).sin() + (2.6 * y).cos());
        let out = heat_propagate(&f, 2.0).unwrap();
        assert_relative_eq!(out.mean(), f.mean(), max_relative = 1e-14);
        // L² norm never grows.
        assert!(out.lp_norm(2.0) <= f.lp_norm(2.0) * (1.0 + 1e-14));
    }

    #[test]
    fn stokes_on_taylor_green() {
        let l = 2.0 * std::f64::consts::PI;
        let g = make_grid(32, l).unwrap();
        let st =
            make_initial_state(&[InitialData::TaylorGreenVelocity { amplitude: 1.0 }], &g).unwrap();
        // Taylor-Green is a Stokes eigenfield with |k|² = 2.
        let out = stokes_propagate(&st.velocity, 1.0).unwrap();
        let expected = st.velocity.scaled((-2.0f64).exp());
        let err = out.sub(&expected).max_abs();
        assert!(err <= 1e-12, "taylor-green decay error {err}");
        // t = 0 is the identity.
        let id = stokes_propagate(&st.velocity, 0.0).unwrap();
        assert!(id.sub(&st.velocity).max_abs() <= 1e-12);
    }

    #[test]
    fn stokes_rejects_non_divergence_free() {
        let g = make_grid(32, 2.0).unwrap();
        let v = VectorField::from_fn(&g, |x, _| ((3.14 * x).sin(), 0.0));
        assert!(stokes_propagate(&v, 0.1).is_err());
    }

    #[test]
    fn stokes_commutes_with_projected_heat() {
        let g = make_grid(48, 3.0).unwrap();
        let raw = VectorField::from_fn(&g, |x, y| {
            ((4.1888 * x).sin() * (2.0944 * y).cos(), (2.0944 * x).cos() + 0.2 * (4.1888 * y).sin())
        });
        let v = ops::leray_project(&raw);
        let t = 0.7;
        let a = stokes_propagate(&v, t).unwrap();
        // Componentwise heat then projection.
        let hx = heat_propagate(v.x(), t).unwrap();
        let hy = heat_propagate(v.y(), t).unwrap();
        let b = ops::leray_project(&VectorField::new(hx, hy).unwrap());
        let err = a.sub(&b).max_abs();
        assert!(err <= 1e-12 * v.max_abs(), "commutation error {err}");
    }

    #[test]
    fn fractional_power_algebra() {
        let g = make_grid(32, 2.0 * std::f64::consts::PI).unwrap();
        let raw = VectorField::from_fn(&g, |x, y| ((x).sin() * (2.0 * y).cos(), (2.0 * x).cos()));
        let v = ops::leray_project(&raw);
        // β = 0 is the identity.
        let id = fractional_power(&v, 0.0).unwrap();
        assert!(id.sub(&v).max_abs() <= 1e-13);
        // β = 1 agrees with -Δ on divergence-free fields.
        let a1 = fractional_power(&v, 1.0).unwrap();
        let lap = VectorField::new(
            ops::laplacian(v.x()).scaled(-1.0),
            ops::laplacian(v.y()).scaled(-1.0),
        )
        .unwrap();
        assert!(a1.sub(&lap).max_abs() <= 1e-12 * lap.max_abs());
        // Half powers compose.
        let half_twice =
            fractional_power(&fractional_power(&v, 0.5).unwrap(), 0.5).unwrap();
        assert!(half_twice.sub(&a1).max_abs() <= 1e-12 * a1.max_abs());
        // Single mode with |k|² = 5 scales by 5 under β = 1.
        let mode = ops::leray_project(&VectorField::from_fn(&g, |x, y| {
            (2.0 * (x + 2.0 * y).cos(), -(x + 2.0 * y).cos())
        }));
        let out = fractional_power(&mode, 1.0).unwrap();
        let err = out.sub(&mode.scaled(5.0)).max_abs();
        assert!(err <= 1e-12 * mode.max_abs() * 5.0, "eigenvalue error {err}");
        assert!(fractional_power(&v, 1.6).is_err());
        assert!(fractional_power(&v, -0.1).is_err());
    }

    #[test]
    fn decay_slopes_match_heat_kernel_rates() {
        // Oracle: exact Gaussian heat-kernel norms on the plane give
        // ‖G_t‖_p ∝ t^{-(1-1/p)}, so the normalized ratio decays like
        // t^{-(1/q-1/p)}.
        let g = make_grid(128, 16.0 * std::f64::consts::PI).unwrap();
        let h = g.spacing();
        let window = geometric_range(5.0 * h * h, g.box_length() * g.box_length() / 300.0, 8);
        for (q, p, expect) in [
            (1.0, 2.0, -0.5),
            (1.0, f64::INFINITY, -1.0),
            (2.0, f64::INFINITY, -0.5),
        ] {
            let fit = verify_decay_exponent(&g, q, p, &window).unwrap();
            assert_relative_eq!(fit.expected, expect, max_relative = 1e-12);
            assert!(
                (fit.slope - expect).abs() <= 0.05 * expect.abs(),
                "slope {} vs {} for ({q},{p})",
                fit.slope,
                expect
            );
        }
        // Contraction: q = p gives a flat ratio.
        let flat = verify_decay_exponent(&g, 2.0, 2.0, &window).unwrap();
        assert!(flat.slope.abs() <= 0.02, "contraction slope {}", flat.slope);
    }

    #[test]
    fn saturated_window_is_rejected() {
        let g = make_grid(64, 2.0 * std::f64::consts::PI).unwrap();
        let bad = vec![1.0, 10.0, 100.0];
        match verify_decay_exponent(&g, 1.0, 2.0, &bad) {
            Err(Error::InvalidWindow(_)) => {}
            other => panic!("expected InvalidWindow, got {other:?}"),
        }
        let too_small = vec![1e-8, 2e-8, 4e-8];
        match verify_decay_exponent(&g, 1.0, 2.0, &too_small) {
            Err(Error::InvalidWindow(_)) => {}
            other => panic!("expected InvalidWindow, got {other:?}"),
        }
    }
}
