//! Monte-Carlo orchestration: independent paths with split seeds, moment
//! estimates with confidence intervals, and the cross-integrator uniqueness
//! probe.
//!
//! Result assembly is deterministic regardless of worker count: paths are
//! collected in index order and reduced with compensated (Neumaier)
//! summation, so permuting path indices moves sample means by less than
//! 1e-12 relatively.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::noise::{self, NoiseSpec, WienerPath};
use crate::runner::PathRunner;
use crate::state::{make_initial_state, x_norms, ExponentSet};
use crate::stepper::{picard_local_solve, StoppingKind};

/// Documented seed-splitting rule: SplitMix64 finalizer applied to
/// `master_seed + (index+1) * GOLDEN`, giving decorrelated per-path streams
/// that are reproducible regardless of scheduling.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    let mut z = master_seed.wrapping_add((path_index + 1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Neumaier compensated sum; order-independent to ~1e-16 relative.
pub fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error via compensated summation.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = neumaier_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = neumaier_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// A scalar Monte-Carlo estimate with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95_half_width: f64,
    pub sample_count: usize,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Self {
        let (mean, se) = mean_se(values);
        Estimate {
            mean,
            std_error: se,
            ci95_half_width: 1.96 * se,
            sample_count: values.len(),
        }
    }
}

/// Per-path summary assembled into the ensemble statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_index: u64,
    pub seed: u64,
    pub sup_abs_free_energy: f64,
    pub sup_abs_modified_energy: f64,
    pub sup_entropy_pos: f64,
    pub sup_kinetic_sq: f64,
    pub integrated_dissipation: f64,
    pub integrated_dissipation_gamma: f64,
    pub martingale_total: f64,
    pub stop_kind: Option<StoppingKind>,
    pub stop_time: Option<f64>,
    pub final_time: f64,
}

/// Moment estimates for one trajectory functional, per requested order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub name: String,
    /// `(k, estimate of E[(sup_t X)^k])` per requested order.
    pub orders: Vec<(u32, Estimate)>,
}

/// Ensemble-level statistics in both accounting conventions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub path_count: usize,
    pub master_seed: u64,
    pub horizon: f64,
    /// Moments over paths that reached the horizon (stopped paths excluded).
    pub alive_moments: Vec<MomentEstimates>,
    /// Moments over all paths, each tracked up to its stopping time.
    pub stopped_moments: Vec<MomentEstimates>,
    pub martingale_mean: Estimate,
    pub stop_counts: StopCounts,
    pub paths: Vec<PathSummary>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StopCounts {
    pub norm_cap: usize,
    pub entropy_cap: usize,
    pub nonfinite: usize,
}

fn run_one_path(cfg: &RunConfig, index: u64) -> Result<PathSummary> {
    let seed = path_seed(cfg.ensemble.master_seed, index);
    let mut runner = PathRunner::new(cfg, seed)?;
    let dt = cfg.stepper.dt;
    let steps = (cfg.stepper.t_final / dt).round() as u64;

    let mut sup_j = 0.0f64;
    let mut sup_e = 0.0f64;
    let mut sup_entropy = 0.0f64;
    let mut sup_kin = 0.0f64;
    let mut int_g = 0.0f64;
    let mut int_gg = 0.0f64;
    let mut mart = 0.0f64;

    let mut prev = runner.last_record();
    let mut absorb = |rec: &crate::runner::StepRecord| {
        sup_j = sup_j.max(rec.free_energy.abs());
        sup_e = sup_e.max(rec.modified_energy.abs());
        sup_entropy = sup_entropy.max(rec.entropy_pos);
        sup_kin = sup_kin.max(rec.kinetic_sq);
    };
    absorb(&prev);

    let mut stop = None;
    for _ in 0..steps {
        let ev = runner.advance()?;
        let rec = runner.last_record();
        // Left-point quadrature of the dissipation integrals.
        int_g += prev.dissipation * dt;
        int_gg += prev.dissipation_gamma * dt;
        mart += rec.noise_terms.martingale_increment;
        absorb(&rec);
        prev = rec;
        if let Some(ev) = ev {
            stop = Some(ev);
            break;
        }
    }

    Ok(PathSummary {
        path_index: index,
        seed,
        sup_abs_free_energy: sup_j,
        sup_abs_modified_energy: sup_e,
        sup_entropy_pos: sup_entropy,
        sup_kinetic_sq: sup_kin,
        integrated_dissipation: int_g,
        integrated_dissipation_gamma: int_gg,
        martingale_total: mart,
        stop_kind: stop.as_ref().map(|e| e.kind),
        stop_time: stop.as_ref().map(|e| e.time),
        final_time: runner.time(),
    })
}

fn moments_over(
    name: &str,
    k_moments: &[u32],
    values: impl Fn(&PathSummary) -> f64,
    paths: &[&PathSummary],
) -> MomentEstimates {
    let mut orders = Vec::new();
    for &k in k_moments {
        let powered: Vec<f64> = paths.iter().map(|p| values(p).powi(k as i32)).collect();
        orders.push((k, Estimate::from_values(&powered)));
    }
    MomentEstimates { name: name.to_string(), orders }
}

/// Run `path_count` independent trajectories and estimate the sup-moments
/// and time-integrated dissipations. Early-stopped paths are first-class
/// results: they are reported separately and never silently averaged into
/// the alive-path moments.
pub fn run_ensemble(cfg: &RunConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let k = cfg.ensemble.path_count;
    if k < 2 {
        return Err(Error::config("ensemble needs at least 2 paths"));
    }
    let indices: Vec<u64> = (0..k as u64).collect();
    let run = |idx: &u64| run_one_path(cfg, *idx);
    let workers = effective_workers(cfg);
    let mut paths: Vec<PathSummary> = if workers == 1 {
        indices.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        pool.install(|| indices.par_iter().map(run).collect::<Result<Vec<_>>>())?
    };
    paths.sort_by_key(|p| p.path_index);

    let mut counts = StopCounts::default();
    for p in &paths {
        match p.stop_kind {
            Some(StoppingKind::NormCap) => counts.norm_cap += 1,
            Some(StoppingKind::EntropyCap) => counts.entropy_cap += 1,
            Some(StoppingKind::NonFinite) => counts.nonfinite += 1,
            None => {}
        }
    }

    let half_horizon = cfg.stepper.t_final / 2.0;
    let alive: Vec<&PathSummary> = paths.iter().filter(|p| p.stop_kind.is_none()).collect();
    if paths.iter().all(|p| p.stop_time.unwrap_or(f64::INFINITY) < half_horizon) {
        return Err(Error::EnsembleFailed(format!(
            "all {k} paths stopped before t = {half_horizon}"
        )));
    }

    let all: Vec<&PathSummary> = paths.iter().collect();
    let km = &cfg.ensemble.k_moments;
    let make = |set: &[&PathSummary]| -> Vec<MomentEstimates> {
        vec![
            moments_over("sup_abs_free_energy", km, |p| p.sup_abs_free_energy, set),
            moments_over("sup_abs_modified_energy", km, |p| p.sup_abs_modified_energy, set),
            moments_over("sup_entropy_pos", km, |p| p.sup_entropy_pos, set),
            moments_over("sup_kinetic_sq", km, |p| p.sup_kinetic_sq, set),
            moments_over("integrated_dissipation", km, |p| p.integrated_dissipation, set),
            moments_over(
                "integrated_dissipation_gamma",
                km,
                |p| p.integrated_dissipation_gamma,
                set,
            ),
        ]
    };

    let mart: Vec<f64> = paths.iter().map(|p| p.martingale_total).collect();
    Ok(EnsembleStats {
        path_count: k,
        master_seed: cfg.ensemble.master_seed,
        horizon: cfg.stepper.t_final,
        alive_moments: make(&alive),
        stopped_moments: make(&all),
        martingale_mean: Estimate::from_values(&mart),
        stop_counts: counts,
        paths,
    })
}

fn effective_workers(cfg: &RunConfig) -> usize {
    if let Ok(v) = std::env::var("KSNS_WORKERS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    if cfg.ensemble.workers >= 1 {
        return cfg.ensemble.workers;
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Outcome of the pathwise-uniqueness probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    /// `max_t (‖n₁-n₂‖_p + ‖u₁-u₂‖₂)` over the common alive window.
    pub max_distance: f64,
    /// End of the window both integrators survived.
    pub common_time: f64,
    pub picard_converged: bool,
    pub picard_iterations: usize,
}

/// Run the exponential-Euler and Picard integrators on one Brownian path and
/// measure the inter-integrator distance. The fixed-point tolerance is
/// tightened to `min(picard_tol, dt²)` so the iteration error stays below
/// the schemes' discretization accuracy at every refinement level.
pub fn uniqueness_probe(cfg: &RunConfig, seed: u64) -> Result<ProbeResult> {
    cfg.validate()?;
    let grid = crate::grid::make_grid(cfg.grid.points_per_side, cfg.grid.box_length)?;
    let state0 = make_initial_state(&cfg.initial, &grid)?;
    let exps = ExponentSet::new(cfg.exponents.epsilon)?;
    let noise_spec = NoiseSpec::lowest_modes(
        &grid,
        cfg.noise.mode_count,
        cfg.noise.sigma0,
        cfg.noise.spectrum_exponent,
        cfg.noise.additive_weight,
        cfg.noise.multiplicative_weight,
    )?;
    let dt = cfg.stepper.dt;
    let steps = (cfg.stepper.t_final / dt).round().max(1.0) as usize;
    let table = noise::increment_table(seed, noise_spec.mode_count(), dt, steps);

    // Route 1: exponential Euler through the runner (running sups, caps).
    let mut runner = PathRunner::from_state(
        cfg,
        state0.clone(),
        noise_spec.clone(),
        WienerPath::from_table(table.clone()),
    )?;
    let mut euler_states = vec![runner.state()];
    for _ in 0..steps {
        let ev = runner.advance()?;
        euler_states.push(runner.state());
        if ev.is_some() {
            break;
        }
    }

    // Route 2: Picard fixed point on the same increments.
    let mut pcfg = cfg.stepper_config();
    pcfg.picard_tol = pcfg.picard_tol.min(dt * dt);
    let mut picard_path = WienerPath::from_table(table);
    let picard = picard_local_solve(
        &state0,
        cfg.stepper.t_final,
        &pcfg,
        &exps,
        &noise_spec,
        &mut picard_path,
    )?;

    let common = euler_states.len().min(picard.trajectory.len());
    let mut max_distance = 0.0f64;
    for k in 0..common {
        let a = &euler_states[k];
        let b = &picard.trajectory[k];
        let dn = a.density.zip_with(&b.density, |x, y| x - y);
        let norms = x_norms(
            &crate::state::State {
                time: a.time,
                density: dn,
                velocity: a.velocity.sub(&b.velocity),
            },
            &exps,
        );
        let du_l2 = a.velocity.sub(&b.velocity).l2_norm();
        max_distance = max_distance.max(norms.n_p + du_l2);
    }
    Ok(ProbeResult {
        max_distance,
        common_time: (common.saturating_sub(1)) as f64 * dt,
        picard_converged: picard.converged,
        picard_iterations: picard.iterations,
    })
}
