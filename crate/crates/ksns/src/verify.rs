//! Named verification suites behind the `verify` CLI command. Each check
//! reports a measured value against its bound; the suites double as the
//! inner machinery of the acceptance tests.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::RealField;
use crate::functionals;
use crate::grid::make_grid;
use crate::runner::PathRunner;
use crate::semigroup::{geometric_range, verify_decay_exponent};
use crate::state::InitialData;

/// One pass/fail line of a verification report.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, bound: f64, pass: bool, detail: String) -> Self {
        CheckResult { name: name.to_string(), measured, bound, pass, detail }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("suite: {}\n", self.suite));
        for c in &self.checks {
            out.push_str(&format!(
                "{} {:40} measured={:+.6e} bound={:+.6e} {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.bound,
                c.detail
            ));
        }
        out
    }
}

pub fn run_suite(name: &str) -> Result<Report> {
    match name {
        "lemmas" => lemmas_suite(),
        "semigroup" => semigroup_suite(),
        "balance" => balance_suite(),
        other => Err(Error::config(format!(
            "unknown verify suite '{other}' (expected lemmas | semigroup | balance)"
        ))),
    }
}

/// Canned Gaussian family for the a-priori inequality checkers.
fn gaussian(
    grid: &std::sync::Arc<crate::grid::Grid>,
    mass: f64,
    sigma: f64,
    off: (f64, f64),
) -> RealField {
    let l = grid.box_length();
    let amp = mass / (2.0 * std::f64::consts::PI * sigma * sigma);
    RealField::from_fn(grid, |x, y| {
        let r2 = (x - l / 2.0 - off.0).powi(2) + (y - l / 2.0 - off.1).powi(2);
        amp * (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Negative-entropy, Nash, gradient-estimate and log-HLS verifiers.
pub fn lemmas_suite() -> Result<Report> {
    let mut checks = Vec::new();

    // (a) negative-entropy inequality on a ten-member family.
    let grid = make_grid(128, 16.0 * std::f64::consts::PI)?;
    let family: Vec<(String, RealField)> = {
        let mut v = Vec::new();
        for (i, (m, s)) in [(0.5, 0.6), (2.0, 0.8), (4.0 * std::f64::consts::PI, 1.25), (20.0, 2.0), (0.2, 3.0)]
            .iter()
            .enumerate()
        {
            v.push((format!("gaussian_{i}"), gaussian(&grid, *m, *s, (0.0, 0.0))));
        }
        for (i, off) in [(2.0, 0.0), (0.0, 3.0), (4.0, 4.0)].iter().enumerate() {
            v.push((format!("offset_{i}"), gaussian(&grid, 3.0, 1.0, *off)));
        }
        let two_bump = gaussian(&grid, 2.0, 0.8, (5.0, 0.0))
            .zip_with(&gaussian(&grid, 2.0, 0.8, (-5.0, 0.0)), |a, b| a + b);
        v.push(("two_bump".to_string(), two_bump));
        let ring = RealField::from_fn(&grid, |x, y| {
            let l = 16.0 * std::f64::consts::PI;
            let r = ((x - l / 2.0).powi(2) + (y - l / 2.0).powi(2)).sqrt();
            2.0 * (-(r - 3.0) * (r - 3.0) / 1.5).exp()
        });
        v.push(("ring".to_string(), ring));
        v
    };
    for (name, n) in &family {
        let chk = functionals::check_negative_entropy(n);
        checks.push(CheckResult::new(
            &format!("negative_entropy/{name}"),
            chk.lhs,
            chk.rhs,
            chk.pass,
            format!("slack={:.3e}", chk.rhs - chk.lhs),
        ));
    }

    // (b) Nash ratio: standard Gaussian equals 1/(4π) within 0.5%, and the
    // sweep family stays below twice that value.
    let nash_grid = make_grid(256, 16.0 * std::f64::consts::PI)?;
    let l = nash_grid.box_length();
    let std_gauss = RealField::from_fn(&nash_grid, |x, y| {
        (-((x - l / 2.0).powi(2) + (y - l / 2.0).powi(2)) / 2.0).exp()
    });
    let ratio = functionals::check_nash(&std_gauss)?;
    let expected = 1.0 / (4.0 * std::f64::consts::PI);
    checks.push(CheckResult::new(
        "nash/standard_gaussian",
        ratio,
        expected,
        (ratio - expected).abs() <= 0.005 * expected,
        format!("rel_err={:.3e}", (ratio - expected).abs() / expected),
    ));
    let mut sweep_max = 0.0f64;
    for (i, (m, s, p)) in [
        (1.0, 0.8, 0.0),
        (2.5, 1.3, 0.3),
        (0.7, 2.2, 0.0),
        (5.0, 1.0, 0.8),
        (1.0, 4.0, 0.0),
    ]
    .iter()
    .enumerate()
    {
        // Smooth positive fields: Gaussians warped by a gentle modulation.
        let f = RealField::from_fn(&nash_grid, |x, y| {
            let r2 = (x - l / 2.0).powi(2) + (y - l / 2.0).powi(2);
            let base = m * (-r2 / (2.0 * s * s)).exp();
            base * (1.0 + p * ((x - l / 2.0) / s).sin().powi(2))
        });
        let r = functionals::check_nash(&f)?;
        sweep_max = sweep_max.max(r);
        let _ = i;
    }
    checks.push(CheckResult::new(
        "nash/sweep_below_2x_gaussian",
        sweep_max,
        2.0 * expected,
        sweep_max < 2.0 * expected,
        String::new(),
    ));

    // (c) gradient estimate with the explicit constant at q ∈ {3, 4, 8}.
    let ge_grid = make_grid(128, 16.0 * std::f64::consts::PI)?;
    for q in [3.0, 4.0, 8.0] {
        for (m, s) in [(3.0, 1.2), (12.0, 0.9)] {
            let n = gaussian(&ge_grid, m, s, (0.0, 0.0));
            let chk = functionals::check_gradient_estimate(&n, q)?;
            checks.push(CheckResult::new(
                &format!("gradient_estimate/q{q}/m{m:.0}"),
                chk.lhs,
                chk.rhs,
                chk.pass,
                format!("C_q={:.4}", chk.c_q),
            ));
        }
    }

    // (d) log-HLS defect across the mass-preserving dilation family.
    let hls_grid = make_grid(512, 8.0 * std::f64::consts::PI)?;
    let mass = 4.0;
    let sigma0 = 1.25;
    let mut defects = Vec::new();
    for lambda in [1.0f64, 2.0, 4.0, 8.0] {
        let n = gaussian(&hls_grid, mass, sigma0 / lambda, (0.0, 0.0));
        let chk = functionals::check_log_hls(&n)?;
        defects.push(chk.defect);
    }
    let dmax = defects.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dmin = defects.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmean = defects.iter().sum::<f64>() / defects.len() as f64;
    let spread_bound = 0.25 * dmean.abs() + 0.5;
    checks.push(CheckResult::new(
        "log_hls/defect_spread_lambda_1_2_4_8",
        dmax - dmin,
        spread_bound,
        dmax - dmin <= spread_bound,
        format!("defects={defects:?}"),
    ));

    Ok(Report { suite: "lemmas".to_string(), checks })
}

/// Heat-semigroup Lᵖ-Lᵠ decay slopes in the pre-saturation window.
pub fn semigroup_suite() -> Result<Report> {
    let grid = make_grid(128, 16.0 * std::f64::consts::PI)?;
    let h = grid.spacing();
    let window = geometric_range(
        5.0 * h * h,
        grid.box_length() * grid.box_length() / 300.0,
        8,
    );
    let mut checks = Vec::new();
    for (q, p, label) in [
        (1.0, 2.0, "q1_p2"),
        (1.0, f64::INFINITY, "q1_pinf"),
        (2.0, f64::INFINITY, "q2_pinf"),
    ] {
        let fit = verify_decay_exponent(&grid, q, p, &window)?;
        let tol = 0.05 * fit.expected.abs();
        checks.push(CheckResult::new(
            &format!("decay_slope/{label}"),
            fit.slope,
            fit.expected,
            (fit.slope - fit.expected).abs() <= tol,
            format!("tol=5%"),
        ));
    }
    let flat = verify_decay_exponent(&grid, 2.0, 2.0, &window)?;
    checks.push(CheckResult::new(
        "decay_slope/contraction_q2_p2",
        flat.slope,
        0.0,
        flat.slope.abs() <= 0.02,
        "flat within 0.02".to_string(),
    ));
    Ok(Report { suite: "semigroup".to_string(), checks })
}

/// Per-step tolerance of the modified-entropy inequality: rounding floor
/// plus the scheme's O(dt²) local truncation allowance.
pub fn entropy_step_tolerance(dt: f64) -> f64 {
    1e-9 + 50.0 * dt * dt
}

/// Configuration of the deterministic balance study: smooth positive data
/// with the density bounded away from zero.
pub fn balance_config(dt: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.points_per_side = 64;
    cfg.grid.box_length = 8.0 * std::f64::consts::PI;
    cfg.initial = vec![
        InitialData::UniformDensity { mass: 50.0 },
        InitialData::GaussianDensity { mass: 12.0, sigma: 1.5, center: None },
        InitialData::TaylorGreenVelocity { amplitude: 0.2 },
    ];
    cfg.noise.mode_count = 0;
    cfg.stepper.dt = dt;
    cfg.stepper.t_final = 0.1;
    cfg.output.cadence = 1;
    cfg
}

/// Outcome of one deterministic balance run.
pub struct BalanceRun {
    pub dt: f64,
    /// Σ_k |residual_k| over the horizon.
    pub integrated_abs_residual: f64,
    /// max_k (J_{k+1} - J_k) (should not exceed the residual scale).
    pub max_energy_increase: f64,
    pub max_abs_residual: f64,
    /// max_k (ΔE_Γ + Ḡ_Γ dt - δ dt), per-step modified-entropy defect.
    pub max_entropy_defect: f64,
    pub steps: usize,
}

pub fn balance_run(dt: f64) -> Result<BalanceRun> {
    let cfg = balance_config(dt);
    let delta = cfg.gamma.delta;
    let mut runner = PathRunner::new(&cfg, 0)?;
    let steps = (cfg.stepper.t_final / dt).round() as usize;
    let mut integrated = 0.0;
    let mut max_abs = 0.0f64;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_defect = f64::NEG_INFINITY;
    let mut prev = runner.last_record();
    for _ in 0..steps {
        let ev = runner.advance()?;
        if let Some(ev) = ev {
            return Err(Error::contract(format!("balance run stopped early: {ev:?}")));
        }
        let rec = runner.last_record();
        integrated += rec.residual.abs();
        max_abs = max_abs.max(rec.residual.abs());
        max_increase = max_increase.max(rec.free_energy - prev.free_energy);
        let defect =
            rec.modified_energy - prev.modified_energy + prev.dissipation_gamma * dt - delta * dt;
        max_defect = max_defect.max(defect);
        prev = rec;
    }
    Ok(BalanceRun {
        dt,
        integrated_abs_residual: integrated,
        max_energy_increase: max_increase,
        max_abs_residual: max_abs,
        max_entropy_defect: max_defect,
        steps,
    })
}

/// Free-energy balance refinement, monotone decay, and the per-step
/// modified-entropy inequality, all with noise off.
pub fn balance_suite() -> Result<Report> {
    let dts = [4e-4, 2e-4, 1e-4];
    let runs: Vec<BalanceRun> = dts.iter().map(|&dt| balance_run(dt)).collect::<Result<_>>()?;
    let mut checks = Vec::new();
    for w in runs.windows(2) {
        // The per-step residual is the scheme's local truncation defect,
        // O(dt²): halving dt shrinks it about 4x.
        let ratio = w[0].max_abs_residual / w[1].max_abs_residual;
        checks.push(CheckResult::new(
            &format!("residual_refinement/dt_{:.0e}_to_{:.0e}", w[0].dt, w[1].dt),
            ratio,
            2.0,
            ratio >= 2.0,
            format!(
                "max|res|: {:.3e} -> {:.3e}; sum|res|: {:.3e} -> {:.3e}",
                w[0].max_abs_residual,
                w[1].max_abs_residual,
                w[0].integrated_abs_residual,
                w[1].integrated_abs_residual
            ),
        ));
    }
    for r in &runs {
        checks.push(CheckResult::new(
            &format!("free_energy_monotone/dt_{:.0e}", r.dt),
            r.max_energy_increase,
            r.max_abs_residual + 1e-12,
            r.max_energy_increase <= r.max_abs_residual + 1e-12,
            "J non-increasing up to residual tolerance".to_string(),
        ));
        let tol = entropy_step_tolerance(r.dt);
        checks.push(CheckResult::new(
            &format!("modified_entropy_step/dt_{:.0e}", r.dt),
            r.max_entropy_defect,
            tol,
            r.max_entropy_defect <= tol,
            "ΔE_Γ + Ḡ_Γ dt ≤ δ dt + tol".to_string(),
        ));
    }
    Ok(Report { suite: "balance".to_string(), checks })
}
