//! Picard fixed-point local solve on small data: contraction ratios, the
//! cross-check against the exponential stepper, and the two-integrator
//! uniqueness probe under time refinement.

use ksns::config::RunConfig;
use ksns::ensemble::uniqueness_probe;
use ksns::noise::{NoiseSpec, WienerPath};
use ksns::state::{make_initial_state, ExponentSet, InitialData};
use ksns::stepper::picard_local_solve;

fn probe_config(dt: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.points_per_side = 32;
    cfg.grid.box_length = 4.0 * std::f64::consts::PI;
    cfg.initial = vec![
        InitialData::GaussianDensity { mass: 0.4, sigma: 1.0, center: None },
        InitialData::ZeroVelocity,
    ];
    cfg.noise.mode_count = 4;
    cfg.noise.sigma0 = 0.1;
    cfg.noise.additive_weight = 1.0;
    cfg.noise.multiplicative_weight = 0.2;
    cfg.stepper.dt = dt;
    cfg.stepper.t_final = 0.05;
    cfg
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Contraction of the fixed-point iteration on small data.
    let cfg = probe_config(1e-3);
    let grid = ksns::grid::make_grid(cfg.grid.points_per_side, cfg.grid.box_length)?;
    let state0 = make_initial_state(&cfg.initial, &grid)?;
    println!("||n0||_inf = {:.4}", state0.density.max_abs());
    let noise = NoiseSpec::lowest_modes(&grid, 4, 0.1, 1.0, 1.0, 0.2)?;
    let mut path = WienerPath::new(7);
    let res = picard_local_solve(
        &state0,
        cfg.stepper.t_final,
        &cfg.stepper_config(),
        &ExponentSet::default(),
        &noise,
        &mut path,
    )?;
    println!(
        "picard: converged = {}, iterations = {}, ratios = {:?}",
        res.converged, res.iterations, res.contraction_ratios
    );

    // Inter-integrator distance under refinement.
    for dt in [2e-3, 1e-3, 5e-4] {
        let probe = uniqueness_probe(&probe_config(dt), 99)?;
        println!(
            "dt = {dt:.1e}: max inter-integrator distance = {:.4e} (picard iters {})",
            probe.max_distance, probe.picard_iterations
        );
    }
    Ok(())
}
