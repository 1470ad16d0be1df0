//! Time integration in the mild formulation: a one-step exponential Euler
//! scheme, a Picard fixed-point local solver mirroring the contraction
//! construction with the smooth cutoff θ_m, and the stopping-time detectors.
//!
//! One step of the exponential scheme reads
//!
//! ```text
//! n⁺ = e^{dt Δ} [ n - dt ( θ_n ∇·(n∇c) + θ_nu ∇·(n u) ) ]
//! u⁺ = e^{-dt A}[ u + dt P( -θ_u ∇·(u⊗u) + θ_n n∇c ) + P Σ_j f_j(u) ΔW_j ]
//! ```
//!
//! with every product formed pointwise in physical space, transformed, and
//! dealiased by the two-thirds rule. Transport is in conservative form
//! (`u·∇n = ∇·(nu)` for divergence-free `u`), so the zero mode of the density
//! update vanishes identically and the cell mass is conserved to rounding.
//! The θ factors take the running supremum of the solution-space norms since
//! the start of the run; above twice the cutoff level they are exactly zero
//! and a step advances only the linear and stochastic parts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{RealField, VectorField};
use crate::functionals::NoiseTerms;
use crate::grid::{Grid, Spectrum};
use crate::noise::{NoiseSpec, WienerPath};
use crate::ops;
use crate::semigroup::PropagatorCache;
use crate::state::{x_norms_capped, ExponentSet, State, XNorms};

/// Time-integration scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExponentialEuler,
    Picard,
}

/// Integrator parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    /// θ_m level `m`; `f64::INFINITY` disables the cutoff (θ ≡ 1).
    pub cutoff_level: f64,
    /// τ_m-type detector threshold on the running X-norm suprema.
    pub blowup_norm_cap: f64,
    /// T_R-type detector threshold on `∫ n ln⁺n + ‖u‖₂²`.
    pub entropy_cap: f64,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::config(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            )));
        }
        if !(self.cutoff_level > 0.0) {
            return Err(Error::config(format!(
                "cutoff_level must be positive (or infinite), got {}",
                self.cutoff_level
            )));
        }
        if !(self.blowup_norm_cap > 0.0) || !(self.entropy_cap > 0.0) {
            return Err(Error::config("stopping caps must be positive".to_string()));
        }
        Ok(())
    }
}

/// Which detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingKind {
    NormCap,
    EntropyCap,
    NonFinite,
}

/// A stopping event halts the trajectory; it is a result, not a failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingEvent {
    pub kind: StoppingKind,
    pub time: f64,
    pub triggering_value: f64,
    pub triggering_norm: String,
}

/// Smooth switch: 1 on `[0, m]`, 0 on `[2m, ∞)`, quintic in between.
/// C² everywhere with `|θ'| ≤ 15/(8m) < 2/m`.
pub fn theta_cutoff(r: f64, m: f64) -> f64 {
    debug_assert!(r >= 0.0 && m > 0.0);
    if m.is_infinite() || r <= m {
        1.0
    } else if r >= 2.0 * m {
        0.0
    } else {
        let s = (r - m) / m;
        1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    }
}

/// Running suprema of the (capped) solution-space norms since t = 0.
#[derive(Debug, Clone, Copy)]
pub struct XSups {
    /// sup over the trajectory of `‖n‖_p`.
    pub n: f64,
    /// sup over the trajectory of `‖u‖_{s_cap} + ‖∇u‖_r`.
    pub u: f64,
}

impl XSups {
    pub fn from_norms(norms: &XNorms) -> Self {
        XSups { n: norms.n_p, u: norms.u_s + norms.grad_u_r }
    }

    pub fn absorb(&mut self, norms: &XNorms) {
        self.n = self.n.max(norms.n_p);
        self.u = self.u.max(norms.u_s + norms.grad_u_r);
    }

    pub fn max(&self) -> f64 {
        self.n.max(self.u)
    }
}

/// Integrator-internal snapshot: dealiased spectra of `(n, u)` plus the step
/// counter. Physical states derive from it deterministically, which is what
/// makes checkpoint resume bit-identical.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub n: Spectrum,
    pub ux: Spectrum,
    pub uy: Spectrum,
    pub step: u64,
}

impl SpectralState {
    pub fn from_state(state: &State) -> Self {
        let grid = state.grid();
        let mut n = state.density.to_spectrum();
        let mut ux = state.velocity.x().to_spectrum();
        let mut uy = state.velocity.y().to_spectrum();
        grid.dealias(&mut n);
        grid.dealias(&mut ux);
        grid.dealias(&mut uy);
        SpectralState { n, ux, uy, step: 0 }
    }

    pub fn to_state(&self, grid: &Arc<Grid>, dt: f64) -> State {
        let density = RealField::from_spectrum(grid, &self.n);
        let velocity = VectorField::new(
            RealField::from_spectrum(grid, &self.ux),
            RealField::from_spectrum(grid, &self.uy),
        )
        .expect("components share the grid");
        State { time: self.step as f64 * dt, density, velocity }
    }

    pub fn all_finite(&self) -> bool {
        self.n.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.ux.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.uy.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Reusable one-step integrator for a fixed `(grid, dt)` pair.
pub struct Stepper {
    grid: Arc<Grid>,
    cfg: StepperConfig,
    noise: NoiseSpec,
    heat: PropagatorCache,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, cfg: StepperConfig, noise: NoiseSpec) -> Result<Self> {
        cfg.validate()?;
        let heat = PropagatorCache::new(grid, cfg.dt)?;
        Ok(Stepper { grid: grid.clone(), cfg, noise, heat })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// θ-weighted, dealiased, projected nonlinear increments of the mild
    /// formulation at one time slice: `-θ_n ∇·(n∇c) - θ_nu ∇·(nu)` for the
    /// density and `P(-θ_u ∇·(u⊗u) + θ_n n∇c)` for the velocity. `None`
    /// when every cutoff factor vanishes (pure linear/stochastic evolution).
    pub fn nonlinear_rhs(&self, s: &SpectralState, sups: &XSups) -> Option<NonlinearRhs> {
        let grid = &self.grid;
        let m = self.cfg.cutoff_level;
        let theta_n = theta_cutoff(sups.n, m);
        let theta_u = theta_cutoff(sups.u, m);
        let theta_nu = theta_cutoff(sups.n + sups.u, m);
        if theta_n == 0.0 && theta_u == 0.0 && theta_nu == 0.0 {
            return None;
        }

        let n_phys = RealField::from_spectrum(grid, &s.n);
        let ux_phys = RealField::from_spectrum(grid, &s.ux);
        let uy_phys = RealField::from_spectrum(grid, &s.uy);

        let d = grid.deriv_symbol();
        let npts = grid.points_per_side();
        let mut rhs_n = Spectrum::zeros((npts, npts));
        let mut rhs_x = Spectrum::zeros((npts, npts));
        let mut rhs_y = Spectrum::zeros((npts, npts));

        // Chemotactic flux n∇c, dealiased; used by both equations.
        if theta_n > 0.0 {
            let mut c_hat = s.n.clone();
            ops::spectrum_solve_chemical(grid, &mut c_hat);
            let (cx_hat, cy_hat) = ops::spectrum_gradient(grid, &c_hat);
            let cx = RealField::from_spectrum(grid, &cx_hat);
            let cy = RealField::from_spectrum(grid, &cy_hat);
            let fx = n_phys.zip_with(&cx, |a, b| a * b);
            let fy = n_phys.zip_with(&cy, |a, b| a * b);
            let mut fx_hat = fx.to_spectrum();
            let mut fy_hat = fy.to_spectrum();
            grid.dealias(&mut fx_hat);
            grid.dealias(&mut fy_hat);
            for i in 0..npts {
                for j in 0..npts {
                    let div = num_complex::Complex::new(0.0, d[i]) * fx_hat[(i, j)]
                        + num_complex::Complex::new(0.0, d[j]) * fy_hat[(i, j)];
                    rhs_n[(i, j)] -= theta_n * div;
                    rhs_x[(i, j)] += theta_n * fx_hat[(i, j)];
                    rhs_y[(i, j)] += theta_n * fy_hat[(i, j)];
                }
            }
        }

        // Conservative transport ∇·(nu).
        if theta_nu > 0.0 {
            let px = n_phys.zip_with(&ux_phys, |a, b| a * b);
            let py = n_phys.zip_with(&uy_phys, |a, b| a * b);
            let mut px_hat = px.to_spectrum();
            let mut py_hat = py.to_spectrum();
            grid.dealias(&mut px_hat);
            grid.dealias(&mut py_hat);
            for i in 0..npts {
                for j in 0..npts {
                    let div = num_complex::Complex::new(0.0, d[i]) * px_hat[(i, j)]
                        + num_complex::Complex::new(0.0, d[j]) * py_hat[(i, j)];
                    rhs_n[(i, j)] -= theta_nu * div;
                }
            }
        }

        // Momentum advection ∇·(u⊗u).
        if theta_u > 0.0 {
            let t11 = ux_phys.zip_with(&ux_phys, |a, b| a * b);
            let t12 = ux_phys.zip_with(&uy_phys, |a, b| a * b);
            let t22 = uy_phys.zip_with(&uy_phys, |a, b| a * b);
            let mut t11_hat = t11.to_spectrum();
            let mut t12_hat = t12.to_spectrum();
            let mut t22_hat = t22.to_spectrum();
            grid.dealias(&mut t11_hat);
            grid.dealias(&mut t12_hat);
            grid.dealias(&mut t22_hat);
            for i in 0..npts {
                for j in 0..npts {
                    let ikx = num_complex::Complex::new(0.0, d[i]);
                    let iky = num_complex::Complex::new(0.0, d[j]);
                    rhs_x[(i, j)] -= theta_u * (ikx * t11_hat[(i, j)] + iky * t12_hat[(i, j)]);
                    rhs_y[(i, j)] -= theta_u * (ikx * t12_hat[(i, j)] + iky * t22_hat[(i, j)]);
                }
            }
        }

        ops::spectrum_leray(grid, &mut rhs_x, &mut rhs_y);
        Some(NonlinearRhs { n: rhs_n, ux: rhs_x, uy: rhs_y })
    }

    /// The projected stochastic forcing `P Σ_j f_j(u) ΔW_j` in mode space,
    /// plus the balance bookkeeping terms at the step's left endpoint.
    pub fn noise_forcing(
        &self,
        s: &SpectralState,
        dw: &[f64],
    ) -> (Option<(Spectrum, Spectrum)>, NoiseTerms) {
        if !self.noise.is_active() {
            return (None, NoiseTerms::default());
        }
        let grid = &self.grid;
        let u_field = VectorField::new(
            RealField::from_spectrum(grid, &s.ux),
            RealField::from_spectrum(grid, &s.uy),
        )
        .expect("components share the grid");
        let terms = NoiseTerms {
            ito_correction: self.noise.ito_correction(&u_field),
            martingale_increment: self.noise.martingale_increment(&u_field, dw),
        };
        let forcing = self.noise.forcing_sum(&u_field, dw).map(|f| {
            let mut sx = f.x().to_spectrum();
            let mut sy = f.y().to_spectrum();
            grid.dealias(&mut sx);
            grid.dealias(&mut sy);
            (sx, sy)
        });
        (forcing, terms)
    }

    /// Advance one exponential-Euler step with the given increments and
    /// cutoff arguments. Also returns the Itô correction and martingale
    /// increment evaluated at the step's left endpoint.
    pub fn step(&self, s: &SpectralState, sups: &XSups, dw: &[f64]) -> (SpectralState, NoiseTerms) {
        let dt = self.cfg.dt;
        let rhs = self.nonlinear_rhs(s, sups);
        let (forcing, terms) = self.noise_forcing(s, dw);

        let mut n_new = s.n.clone();
        let mut ux_new = s.ux.clone();
        let mut uy_new = s.uy.clone();
        if let Some(rhs) = &rhs {
            n_new.zip_mut_with(&rhs.n, |a, &b| *a += dt * b);
            ux_new.zip_mut_with(&rhs.ux, |a, &b| *a += dt * b);
            uy_new.zip_mut_with(&rhs.uy, |a, &b| *a += dt * b);
        }
        if let Some((sx, sy)) = &forcing {
            ux_new.zip_mut_with(sx, |a, &b| *a += b);
            uy_new.zip_mut_with(sy, |a, &b| *a += b);
        }
        self.heat.apply_heat(&mut n_new);
        self.heat.apply_heat(&mut ux_new);
        self.heat.apply_heat(&mut uy_new);

        (SpectralState { n: n_new, ux: ux_new, uy: uy_new, step: s.step + 1 }, terms)
    }
}

/// Spectral nonlinear increments of the mild formulation at one time slice.
pub struct NonlinearRhs {
    pub n: Spectrum,
    pub ux: Spectrum,
    pub uy: Spectrum,
}

/// Outcome of one public stepping call.
#[derive(Debug)]
pub struct StepOutcome {
    pub state: State,
    pub noise_terms: NoiseTerms,
    pub event: Option<StoppingEvent>,
}

/// One exponential-Euler step from a physical state. The cutoff arguments
/// are the state's instantaneous norms; trajectory-level running suprema live
/// in [`crate::runner::PathRunner`].
pub fn exponential_euler_step(
    state: &State,
    cfg: &StepperConfig,
    exps: &ExponentSet,
    noise: &NoiseSpec,
    path: &mut WienerPath,
) -> Result<StepOutcome> {
    if !state.all_finite() {
        return Err(Error::NonFinite("exponential_euler_step input"));
    }
    let grid = state.grid();
    let stepper = Stepper::new(grid, *cfg, noise.clone())?;
    let sups = XSups::from_norms(&x_norms_capped(state, exps));
    let spec = {
        let mut s = SpectralState::from_state(state);
        s.step = (state.time / cfg.dt).round() as u64;
        s
    };
    let dw = path.sample_increments(cfg.dt, noise.mode_count())?;
    let (next, terms) = stepper.step(&spec, &sups, &dw);
    let mut out = next.to_state(grid, cfg.dt);
    out.time = state.time + cfg.dt;
    let event = if out.all_finite() {
        None
    } else {
        Some(StoppingEvent {
            kind: StoppingKind::NonFinite,
            time: out.time,
            triggering_value: f64::NAN,
            triggering_norm: "nonfinite".to_string(),
        })
    };
    Ok(StepOutcome { state: out, noise_terms: terms, event })
}

/// First violated cap, if any: the norm cap checks the running X-norm
/// suprema (the state's instantaneous norms when none are supplied), the
/// entropy cap checks `∫ n ln⁺n + ‖u‖₂²`, and non-finite values always fire.
pub fn detect_stopping(
    state: &State,
    exps: &ExponentSet,
    cfg: &StepperConfig,
    sups: Option<&XSups>,
) -> Option<StoppingEvent> {
    if !state.all_finite() {
        return Some(StoppingEvent {
            kind: StoppingKind::NonFinite,
            time: state.time,
            triggering_value: f64::NAN,
            triggering_norm: "nonfinite".to_string(),
        });
    }
    let own_sups;
    let sups = match sups {
        Some(s) => s,
        None => {
            own_sups = XSups::from_norms(&x_norms_capped(state, exps));
            &own_sups
        }
    };
    if sups.max() >= cfg.blowup_norm_cap {
        let (value, name) = if sups.n >= sups.u {
            (sups.n, "sup_t ||n||_p")
        } else {
            (sups.u, "sup_t (||u||_s_cap + ||grad u||_r)")
        };
        return Some(StoppingEvent {
            kind: StoppingKind::NormCap,
            time: state.time,
            triggering_value: value,
            triggering_norm: name.to_string(),
        });
    }
    let entropy = crate::functionals::entropy_positive(&state.density);
    let kinetic2 = {
        let n = state.velocity.l2_norm();
        n * n
    };
    if entropy + kinetic2 > cfg.entropy_cap {
        return Some(StoppingEvent {
            kind: StoppingKind::EntropyCap,
            time: state.time,
            triggering_value: entropy + kinetic2,
            triggering_norm: "int n ln+ n + ||u||_2^2".to_string(),
        });
    }
    None
}

/// Result of the Picard fixed-point local solve.
#[derive(Debug)]
pub struct PicardResult {
    /// States at the step grid `t_k = k dt`, `k = 0..=steps`.
    pub trajectory: Vec<State>,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
}

/// Solve the discretized Duhamel fixed point on `[0, horizon]`.
///
/// The nonlinear Duhamel integrals are evaluated by the left-endpoint rule
/// with the semigroup kernel integrated exactly over each subinterval
/// (`dt φ₁(dtΔ) N(t_j)` per slice), the stochastic convolution uses the same
/// left-point increments as the exponential stepper, and the Brownian
/// increments are sampled once and replayed in every iteration. The initial
/// iterate is the linear (nonlinearity- and noise-free) mild flow, so an
/// affine map converges in a single iteration.
pub fn picard_local_solve(
    state0: &State,
    horizon: f64,
    cfg: &StepperConfig,
    exps: &ExponentSet,
    noise: &NoiseSpec,
    path: &mut WienerPath,
) -> Result<PicardResult> {
    if !(horizon > 0.0) {
        return Err(Error::config(format!("horizon must be positive, got {horizon}")));
    }
    let grid = state0.grid();
    let dt = cfg.dt;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let stepper = Stepper::new(grid, *cfg, noise.clone())?;
    let dw_table: Vec<Vec<f64>> = (0..steps)
        .map(|_| path.sample_increments(dt, noise.mode_count()))
        .collect::<Result<_>>()?;

    let s0 = SpectralState::from_state(state0);

    // Initial iterate: linear mild flow (heat / Stokes decay only).
    let mut current: Vec<SpectralState> = Vec::with_capacity(steps + 1);
    current.push(s0.clone());
    for k in 0..steps {
        current.push(linear_decay_step(&stepper, &current[k]));
    }

    let measure = |a: &SpectralState, b: &SpectralState| -> f64 {
        let sa = a.to_state(grid, dt);
        let sb = b.to_state(grid, dt);
        let dn = sa.density.zip_with(&sb.density, |x, y| x - y);
        let du = sa.velocity.sub(&sb.velocity);
        let dstate = State { time: sa.time, density: dn, velocity: du };
        let norms = x_norms_capped(&dstate, exps);
        norms.n_p + norms.u_s + norms.grad_u_r
    };

    let mut ratios = Vec::new();
    let mut last_dist = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for _iter in 0..cfg.picard_max_iters {
        iterations += 1;
        // One sweep of Φ with coefficients frozen at the previous iterate:
        // sups, products and noise coefficients all read `current`.
        let mut next: Vec<SpectralState> = Vec::with_capacity(steps + 1);
        next.push(s0.clone());
        let mut sups = XSups::from_norms(&x_norms_capped(
            &current[0].to_state(grid, dt),
            exps,
        ));
        let mut acc = s0.clone();
        for k in 0..steps {
            let frozen = &current[k];
            // Running supremum along the frozen iterate up to t_k.
            sups.absorb(&x_norms_capped(&frozen.to_state(grid, dt), exps));
            let rhs = stepper.nonlinear_rhs(frozen, &sups);
            let (forcing, _) = stepper.noise_forcing(frozen, &dw_table[k]);

            let mut n_new = acc.n.clone();
            let mut ux_new = acc.ux.clone();
            let mut uy_new = acc.uy.clone();
            if let Some((sx, sy)) = &forcing {
                ux_new.zip_mut_with(sx, |a, &b| *a += b);
                uy_new.zip_mut_with(sy, |a, &b| *a += b);
            }
            stepper.heat.apply_heat(&mut n_new);
            stepper.heat.apply_heat(&mut ux_new);
            stepper.heat.apply_heat(&mut uy_new);
            if let Some(rhs) = rhs {
                let phi1 = stepper.heat.phi1_multipliers();
                for ((i, j), v) in n_new.indexed_iter_mut() {
                    *v += dt * phi1[(i, j)] * rhs.n[(i, j)];
                }
                for ((i, j), v) in ux_new.indexed_iter_mut() {
                    *v += dt * phi1[(i, j)] * rhs.ux[(i, j)];
                }
                for ((i, j), v) in uy_new.indexed_iter_mut() {
                    *v += dt * phi1[(i, j)] * rhs.uy[(i, j)];
                }
            }
            acc = SpectralState { n: n_new, ux: ux_new, uy: uy_new, step: acc.step + 1 };
            next.push(acc.clone());
        }

        let dist = (0..=steps)
            .map(|k| measure(&next[k], &current[k]))
            .fold(0.0f64, f64::max);
        if !dist.is_finite() {
            return Err(Error::NonFinite("picard iteration"));
        }
        if last_dist.is_finite() && last_dist > 0.0 {
            ratios.push(dist / last_dist);
        }
        last_dist = dist;
        current = next;
        if dist < cfg.picard_tol {
            converged = true;
            break;
        }
    }

    let trajectory = current
        .iter()
        .map(|s| {
            let mut st = s.to_state(grid, dt);
            st.time = state0.time + s.step as f64 * dt - s0.step as f64 * dt;
            st
        })
        .collect();
    Ok(PicardResult { trajectory, iterations, contraction_ratios: ratios, converged })
}

/// Pure semigroup decay of a spectral state (no nonlinearity, no noise).
fn linear_decay_step(stepper: &Stepper, s: &SpectralState) -> SpectralState {
    let mut n = s.n.clone();
    let mut ux = s.ux.clone();
    let mut uy = s.uy.clone();
    stepper.heat.apply_heat(&mut n);
    stepper.heat.apply_heat(&mut ux);
    stepper.heat.apply_heat(&mut uy);
    SpectralState { n, ux, uy, step: s.step + 1 }
}
