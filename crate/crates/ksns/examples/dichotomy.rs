//! The 8π mass dichotomy: a subcritical Gaussian spreads, a supercritical
//! one concentrates until a stopping detector fires.
//!
//! Usage: cargo run --example dichotomy [-- N dt mass_over_pi t_final entropy_cap]
//!
//! Defaults reproduce the acceptance configuration at a reduced horizon.

use ksns::config::RunConfig;
use ksns::runner::PathRunner;
use ksns::state::InitialData;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(128, |s| s.parse().unwrap());
    let dt: f64 = args.get(1).map_or(5e-4, |s| s.parse().unwrap());
    let mass_over_pi: f64 = args.get(2).map_or(16.0, |s| s.parse().unwrap());
    let t_final: f64 = args.get(3).map_or(1.0, |s| s.parse().unwrap());
    let entropy_cap: f64 = args.get(4).map_or(250.0, |s| s.parse().unwrap());

    let mass = mass_over_pi * std::f64::consts::PI;
    let mut cfg = RunConfig::default();
    cfg.grid.points_per_side = n;
    cfg.grid.box_length = 16.0 * std::f64::consts::PI;
    cfg.initial = vec![
        InitialData::GaussianDensity { mass, sigma: 1.25, center: None },
        InitialData::ZeroVelocity,
    ];
    cfg.noise.mode_count = 0;
    cfg.stepper.dt = dt;
    cfg.stepper.t_final = t_final;
    cfg.stepper.entropy_cap = entropy_cap;
    cfg.stepper.blowup_norm_cap = 1e6;

    let mut runner = PathRunner::new(&cfg, 0)?;
    let steps = (t_final / dt).round() as u64;
    let n4_initial = runner.state().density.lp_norm(4.0);
    let ninf_initial = runner.state().density.max_abs();
    println!(
        "mass = {:.3} ({}π, 8π threshold), N = {n}, dt = {dt:.2e}",
        mass, mass_over_pi
    );
    println!("t=0: ||n||_4 = {n4_initial:.4}, ||n||_inf = {ninf_initial:.4}");

    let report_every = ((0.05 / dt).round() as u64).max(1);
    let mut sup_inf = 0.0f64;
    let mut ninf_at_01 = f64::NAN;
    let mut event = None;
    for k in 0..steps {
        let ev = runner.advance()?;
        let state = runner.state();
        let ninf = state.density.max_abs();
        sup_inf = sup_inf.max(ninf);
        if (runner.time() - 0.1).abs() < 0.5 * dt {
            ninf_at_01 = ninf;
        }
        if (k + 1) % report_every == 0 || ev.is_some() {
            let n4 = state.density.lp_norm(4.0);
            let rec = runner.last_record();
            println!(
                "t = {:.3}: ||n||_4 = {:9.4} ({:5.2}x)  ||n||_inf = {:9.3}  entropy+ = {:9.3}  mass drift = {:.2e}  min n = {:+.2e}",
                runner.time(),
                n4,
                n4 / n4_initial,
                ninf,
                rec.entropy_pos,
                (rec.mass - runner.initial_mass()).abs() / runner.initial_mass(),
                rec.min_density,
            );
        }
        if let Some(ev) = ev {
            event = Some(ev);
            break;
        }
    }
    match event {
        Some(ev) => {
            let n4 = runner.state().density.lp_norm(4.0);
            println!(
                "STOP: {:?} at t = {:.4} ({} = {:.4e}); ||n||_4 growth {:.2}x",
                ev.kind,
                ev.time,
                ev.triggering_norm,
                ev.triggering_value,
                n4 / n4_initial
            );
        }
        None => {
            println!(
                "ran to t = {:.3} without stopping; sup_t ||n||_inf = {:.4} ({:.2}x its value at t=0.1 = {:.4})",
                runner.time(),
                sup_inf,
                sup_inf / ninf_at_01,
                ninf_at_01
            );
        }
    }
    Ok(())
}
