//! Single-trajectory orchestration: running suprema for the cutoff and the
//! τ_m detector, per-step free-energy balance bookkeeping, positivity
//! monitoring, stopping, and checkpoint state.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::functionals::{
    self, diagnostics_row, DiagnosticsRow, GammaParams, NoiseTerms,
};
use crate::grid::{make_grid, Grid};
use crate::noise::{NoiseSpec, WienerPath};
use crate::state::{make_initial_state, x_norms_capped, ExponentSet, State};
use crate::stepper::{
    detect_stopping, SpectralState, Stepper, StoppingEvent, StoppingKind, XSups,
};

/// Cheap per-step bookkeeping used by the balance, moment and convergence
/// suites. All scalar functionals here are evaluated from the spectral state
/// (Parseval for the quadratic terms), bypassing the generic field pipeline.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub time: f64,
    pub mass: f64,
    pub free_energy: f64,
    pub modified_energy: f64,
    pub dissipation: f64,
    pub dissipation_gamma: f64,
    pub entropy_pos: f64,
    pub kinetic_sq: f64,
    pub noise_terms: NoiseTerms,
    /// Residual of the balance over the step ENDING at `time` (0 at t = 0).
    pub residual: f64,
    pub min_density: f64,
    pub max_density: f64,
}

/// Positivity monitoring (never silently clipped).
#[derive(Debug, Clone, Copy, Default)]
pub struct PositivityStats {
    pub violations: u64,
    pub worst: f64,
}

struct StepScalars {
    free_energy: f64,
    modified_energy: f64,
    dissipation: f64,
    dissipation_gamma: f64,
    entropy_pos: f64,
    kinetic_sq: f64,
}

/// Drives one simulation path with the exponential-Euler stepper.
pub struct PathRunner {
    cfg: RunConfig,
    grid: Arc<Grid>,
    exps: ExponentSet,
    gamma: GammaParams,
    stepper: Stepper,
    path: WienerPath,
    spec: SpectralState,
    sups: XSups,
    initial_mass: f64,
    event: Option<StoppingEvent>,
    positivity: PositivityStats,
    // left-endpoint values of the step about to be taken
    prev_free_energy: f64,
    prev_dissipation: f64,
    last_record: StepRecord,
}

impl PathRunner {
    /// Build a runner from a validated config; `seed` is the Wiener seed
    /// (the ensemble derives per-path seeds, a single run uses `noise.seed`).
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let grid = make_grid(cfg.grid.points_per_side, cfg.grid.box_length)?;
        let state0 = make_initial_state(&cfg.initial, &grid)?;
        let noise = NoiseSpec::lowest_modes(
            &grid,
            cfg.noise.mode_count,
            cfg.noise.sigma0,
            cfg.noise.spectrum_exponent,
            cfg.noise.additive_weight,
            cfg.noise.multiplicative_weight,
        )?;
        Self::from_state(cfg, state0, noise, WienerPath::new(seed))
    }

    pub fn from_state(
        cfg: &RunConfig,
        state0: State,
        noise: NoiseSpec,
        path: WienerPath,
    ) -> Result<Self> {
        let grid = state0.grid().clone();
        let exps = ExponentSet::new(cfg.exponents.epsilon)?;
        let mass = state0.mass();
        let gamma = GammaParams::new(cfg.gamma.delta, mass.max(f64::MIN_POSITIVE))?;
        let stepper = Stepper::new(&grid, cfg.stepper_config(), noise)?;
        let sups = XSups::from_norms(&x_norms_capped(&state0, &exps));
        let spec = SpectralState::from_state(&state0);
        let mut runner = PathRunner {
            cfg: cfg.clone(),
            grid,
            exps,
            gamma,
            stepper,
            path,
            spec,
            sups,
            initial_mass: mass,
            event: None,
            positivity: PositivityStats::default(),
            prev_free_energy: 0.0,
            prev_dissipation: 0.0,
            last_record: StepRecord {
                time: 0.0,
                mass,
                free_energy: 0.0,
                modified_energy: 0.0,
                dissipation: 0.0,
                dissipation_gamma: 0.0,
                entropy_pos: 0.0,
                kinetic_sq: 0.0,
                noise_terms: NoiseTerms::default(),
                residual: 0.0,
                min_density: 0.0,
                max_density: 0.0,
            },
        };
        let state = runner.state();
        if !state.all_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        let scalars = runner.spectral_scalars(&state);
        runner.prev_free_energy = scalars.free_energy;
        runner.prev_dissipation = scalars.dissipation;
        runner.last_record = StepRecord {
            time: 0.0,
            mass,
            free_energy: scalars.free_energy,
            modified_energy: scalars.modified_energy,
            dissipation: scalars.dissipation,
            dissipation_gamma: scalars.dissipation_gamma,
            entropy_pos: scalars.entropy_pos,
            kinetic_sq: scalars.kinetic_sq,
            noise_terms: NoiseTerms::default(),
            residual: 0.0,
            min_density: state.density.min_value(),
            max_density: state.density.max_abs(),
        };
        Ok(runner)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn exponents(&self) -> &ExponentSet {
        &self.exps
    }

    pub fn gamma_params(&self) -> &GammaParams {
        &self.gamma
    }

    pub fn step_index(&self) -> u64 {
        self.spec.step
    }

    pub fn time(&self) -> f64 {
        self.spec.step as f64 * self.cfg.stepper.dt
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }

    pub fn event(&self) -> Option<&StoppingEvent> {
        self.event.as_ref()
    }

    pub fn positivity(&self) -> PositivityStats {
        self.positivity
    }

    pub fn sups(&self) -> XSups {
        self.sups
    }

    pub fn last_record(&self) -> StepRecord {
        self.last_record
    }

    /// Current physical state (derived from the spectral snapshot).
    pub fn state(&self) -> State {
        self.spec.to_state(&self.grid, self.cfg.stepper.dt)
    }

    /// Advance one step. Returns the stopping event when one fires (stepping
    /// then halts; further calls return the same event).
    pub fn advance(&mut self) -> Result<Option<StoppingEvent>> {
        if let Some(ev) = &self.event {
            return Ok(Some(ev.clone()));
        }
        let dw = self
            .path
            .sample_increments(self.cfg.stepper.dt, self.stepper.noise().mode_count())?;
        let (next, terms) = self.stepper.step(&self.spec, &self.sups, &dw);
        if !next.all_finite() {
            let ev = StoppingEvent {
                kind: StoppingKind::NonFinite,
                time: next.step as f64 * self.cfg.stepper.dt,
                triggering_value: f64::NAN,
                triggering_norm: "nonfinite".to_string(),
            };
            self.event = Some(ev.clone());
            self.spec = next;
            return Ok(Some(ev));
        }
        self.spec = next;
        if self.cfg.stepper.clamp_negative_density {
            self.clamp_density();
        }
        let state = self.state();

        // Positivity monitoring.
        let min_n = state.density.min_value();
        let floor = -self.cfg.stepper.positivity_tolerance * state.density.max_abs();
        if min_n < floor {
            self.positivity.violations += 1;
            self.positivity.worst = self.positivity.worst.min(min_n);
        }

        // Running suprema feed both the cutoff and the τ_m detector.
        self.sups.absorb(&x_norms_capped(&state, &self.exps));

        // Balance bookkeeping with `G` at the step's left endpoint.
        let scalars = self.spectral_scalars(&state);
        let dt = self.cfg.stepper.dt;
        let residual = scalars.free_energy - self.prev_free_energy
            + self.prev_dissipation * dt
            - terms.ito_correction * dt
            - terms.martingale_increment;
        self.last_record = StepRecord {
            time: state.time,
            mass: state.mass(),
            free_energy: scalars.free_energy,
            modified_energy: scalars.modified_energy,
            dissipation: scalars.dissipation,
            dissipation_gamma: scalars.dissipation_gamma,
            entropy_pos: scalars.entropy_pos,
            kinetic_sq: scalars.kinetic_sq,
            noise_terms: terms,
            residual,
            min_density: min_n,
            max_density: state.density.max_abs(),
        };
        self.prev_free_energy = scalars.free_energy;
        self.prev_dissipation = scalars.dissipation;

        let sc = self.cfg.stepper_config();
        if let Some(ev) = detect_stopping(&state, &self.exps, &sc, Some(&self.sups)) {
            self.event = Some(ev.clone());
            return Ok(Some(ev));
        }
        Ok(None)
    }

    /// Scalar functionals straight from the spectral snapshot: the
    /// interaction, kinetic and enstrophy terms come from Parseval sums, the
    /// entropies and the density dissipation from one set of inverse
    /// transforms shared with `state`.
    fn spectral_scalars(&self, state: &State) -> StepScalars {
        let grid = &self.grid;
        let l = grid.box_length();
        let l2 = l * l;

        // ∫ n c dx = L² Σ_{k≠0} |n̂_k|² / |k|²  (zero-mean gauge).
        let npts = grid.points_per_side();
        let mut interaction = 0.0;
        let mut grad_u_sq = 0.0;
        let mut kinetic_sq = 0.0;
        for i in 0..npts {
            for j in 0..npts {
                let k2 = grid.ksq(i, j);
                let nc = self.spec.n[(i, j)].norm_sqr();
                let uu = self.spec.ux[(i, j)].norm_sqr() + self.spec.uy[(i, j)].norm_sqr();
                if k2 > 0.0 {
                    interaction += nc / k2;
                }
                grad_u_sq += k2 * uu;
                kinetic_sq += uu;
            }
        }
        interaction *= l2;
        grad_u_sq *= l2;
        kinetic_sq *= l2;

        let entropy = functionals::entropy_signed(&state.density);
        let entropy_pos = functionals::entropy_positive(&state.density);
        let gamma_entropy = functionals::gamma_entropy(&state.density, &self.gamma);
        let kinetic = 0.5 * kinetic_sq;

        let (gx_n, gy_n) = crate::ops::spectrum_gradient(grid, &self.spec.n);
        let grad_n = VectorField::new(
            crate::field::RealField::from_spectrum(grid, &gx_n),
            crate::field::RealField::from_spectrum(grid, &gy_n),
        )
        .expect("components share the grid");
        let mut c_hat = self.spec.n.clone();
        crate::ops::spectrum_solve_chemical(grid, &mut c_hat);
        let (gx_c, gy_c) = crate::ops::spectrum_gradient(grid, &c_hat);
        let grad_c = VectorField::new(
            crate::field::RealField::from_spectrum(grid, &gx_c),
            crate::field::RealField::from_spectrum(grid, &gy_c),
        )
        .expect("components share the grid");
        let (g, g_gamma) = functionals::dissipation_integrals(
            &state.density,
            &grad_n,
            &grad_c,
            self.gamma.eta,
            grad_u_sq,
        );

        StepScalars {
            free_energy: entropy - 0.5 * interaction + kinetic,
            modified_energy: gamma_entropy - 0.5 * interaction + kinetic,
            dissipation: g,
            dissipation_gamma: g_gamma,
            entropy_pos,
            kinetic_sq,
        }
    }

    fn clamp_density(&mut self) {
        let mut density = crate::field::RealField::from_spectrum(&self.grid, &self.spec.n);
        let before = density.integral();
        let mut clipped = false;
        for v in density.values_mut().iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clipped = true;
            }
        }
        if clipped && before > 0.0 {
            let after = density.integral();
            if after > 0.0 {
                let scale = before / after;
                for v in density.values_mut().iter_mut() {
                    *v *= scale;
                }
            }
            let mut spec = density.to_spectrum();
            self.grid.dealias(&mut spec);
            self.spec.n = spec;
        }
    }

    /// Full diagnostics row for the current state, carrying the residual of
    /// the last completed step.
    pub fn diagnostics(&self) -> Result<DiagnosticsRow> {
        diagnostics_row(&self.state(), &self.exps, &self.gamma, self.last_record.residual)
    }

    /// Snapshot for the checkpoint container.
    pub fn checkpoint_state(&self) -> Result<CheckpointState> {
        let word_pos = self.path.word_pos().ok_or_else(|| {
            Error::Checkpoint("replay-mode paths cannot be checkpointed".to_string())
        })?;
        Ok(CheckpointState {
            spec: self.spec.clone(),
            seed: self.path.seed(),
            word_pos,
            consumed_steps: self.path.consumed_steps(),
            sups: self.sups,
            initial_mass: self.initial_mass,
            positivity: self.positivity,
            prev_free_energy: self.prev_free_energy,
            prev_dissipation: self.prev_dissipation,
        })
    }

    /// Rebuild a runner mid-trajectory; continuation is bit-identical to an
    /// uninterrupted single-worker run.
    pub fn from_checkpoint(cfg: &RunConfig, cp: CheckpointState) -> Result<Self> {
        cfg.validate()?;
        let grid = make_grid(cfg.grid.points_per_side, cfg.grid.box_length)?;
        let exps = ExponentSet::new(cfg.exponents.epsilon)?;
        let gamma = GammaParams::new(cfg.gamma.delta, cp.initial_mass.max(f64::MIN_POSITIVE))?;
        let noise = NoiseSpec::lowest_modes(
            &grid,
            cfg.noise.mode_count,
            cfg.noise.sigma0,
            cfg.noise.spectrum_exponent,
            cfg.noise.additive_weight,
            cfg.noise.multiplicative_weight,
        )?;
        let stepper = Stepper::new(&grid, cfg.stepper_config(), noise)?;
        let path = WienerPath::restore(cp.seed, cp.word_pos, cp.consumed_steps);
        let state = cp.spec.to_state(&grid, cfg.stepper.dt);
        let record = StepRecord {
            time: state.time,
            mass: state.mass(),
            free_energy: cp.prev_free_energy,
            modified_energy: 0.0,
            dissipation: cp.prev_dissipation,
            dissipation_gamma: 0.0,
            entropy_pos: 0.0,
            kinetic_sq: 0.0,
            noise_terms: NoiseTerms::default(),
            residual: 0.0,
            min_density: state.density.min_value(),
            max_density: state.density.max_abs(),
        };
        Ok(PathRunner {
            cfg: cfg.clone(),
            grid,
            exps,
            gamma,
            stepper,
            path,
            spec: cp.spec,
            sups: cp.sups,
            initial_mass: cp.initial_mass,
            event: None,
            positivity: cp.positivity,
            prev_free_energy: cp.prev_free_energy,
            prev_dissipation: cp.prev_dissipation,
            last_record: record,
        })
    }

    /// Velocity of the current state (used by tests probing divergence).
    pub fn velocity(&self) -> VectorField {
        self.state().velocity
    }
}

/// Everything needed to continue a trajectory bit-identically.
#[derive(Debug, Clone)]
pub struct CheckpointState {
    pub spec: SpectralState,
    pub seed: u64,
    pub word_pos: u128,
    pub consumed_steps: u64,
    pub sups: XSups,
    pub initial_mass: f64,
    pub positivity: PositivityStats,
    pub prev_free_energy: f64,
    pub prev_dissipation: f64,
}
