//! Stochastic forcing: a truncated cylindrical Wiener process, the affine
//! coefficient family `f_j(u) = σ_j P(γ ψ_j + λ u)`, and the stochastic
//! convolution against the Stokes semigroup.
//!
//! The shape family ψ_j consists of divergence-free trigonometric eigenmodes
//! of unit L² norm, so the growth and Lipschitz hypotheses on the coefficient
//! hold with explicit constants; `verify_hypotheses` turns that claim into a
//! measurement.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{RealField, VectorField};
use crate::grid::Grid;
use crate::ops;
use crate::semigroup;

/// Default bound accepted for `Σ σ_j²` when none is configured.
pub const DEFAULT_TRACE_BOUND: f64 = 1e3;

/// The forcing model `f(u) dW`.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    sigmas: Vec<f64>,
    shapes: Vec<VectorField>,
    /// γ: weight of the state-independent part.
    pub additive_weight: f64,
    /// λ: weight of the state-proportional part.
    pub multiplicative_weight: f64,
}

impl NoiseSpec {
    /// Forcing disabled (J = 0).
    pub fn none() -> Self {
        NoiseSpec {
            sigmas: Vec::new(),
            shapes: Vec::new(),
            additive_weight: 0.0,
            multiplicative_weight: 0.0,
        }
    }

    /// Validate and assemble a spec from explicit shapes.
    pub fn new(
        shapes: Vec<VectorField>,
        sigmas: Vec<f64>,
        additive_weight: f64,
        multiplicative_weight: f64,
        trace_bound: f64,
    ) -> Result<Self> {
        if shapes.len() != sigmas.len() {
            return Err(Error::config("one sigma per shape required"));
        }
        if additive_weight < 0.0 || multiplicative_weight < 0.0 {
            return Err(Error::config("noise weights must be nonnegative"));
        }
        let trace: f64 = sigmas.iter().map(|s| s * s).sum();
        if trace > trace_bound {
            return Err(Error::config(format!(
                "noise trace {trace:.3e} exceeds the configured bound {trace_bound:.3e}"
            )));
        }
        for (j, (shape, &sigma)) in shapes.iter().zip(&sigmas).enumerate() {
            if !(sigma > 0.0) {
                return Err(Error::config(format!("sigma_{j} must be positive, got {sigma}")));
            }
            if ops::relative_divergence(shape) > 1e-10 {
                return Err(Error::contract(format!("shape {j} is not divergence-free")));
            }
            if shape.x().mean().abs() + shape.y().mean().abs() > 1e-12 * shape.max_abs().max(1.0) {
                return Err(Error::contract(format!("shape {j} is not mean-zero")));
            }
            let norm = shape.l2_norm();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::contract(format!("shape {j} has L2 norm {norm}, expected 1")));
            }
        }
        Ok(NoiseSpec { sigmas, shapes, additive_weight, multiplicative_weight })
    }

    /// The default family: the `j_count` lowest divergence-free eigenmodes
    /// (cosine and sine polarization per wave vector, ordered by `|k|²`),
    /// with the power-law spectrum `σ_j = σ₀ j^{-spectrum_exponent}`.
    pub fn lowest_modes(
        grid: &Arc<Grid>,
        j_count: usize,
        sigma0: f64,
        spectrum_exponent: f64,
        additive_weight: f64,
        multiplicative_weight: f64,
    ) -> Result<Self> {
        if j_count == 0 {
            return Ok(NoiseSpec {
                sigmas: Vec::new(),
                shapes: Vec::new(),
                additive_weight,
                multiplicative_weight,
            });
        }
        if !(sigma0 > 0.0) {
            return Err(Error::config(format!("sigma0 must be positive, got {sigma0}")));
        }
        let shapes = eigenmode_shapes(grid, j_count);
        if shapes.len() < j_count {
            return Err(Error::config(format!(
                "grid too small for {j_count} noise shapes inside the dealiased band"
            )));
        }
        let sigmas: Vec<f64> =
            (1..=j_count).map(|j| sigma0 * (j as f64).powf(-spectrum_exponent)).collect();
        NoiseSpec::new(shapes, sigmas, additive_weight, multiplicative_weight, DEFAULT_TRACE_BOUND)
    }

    pub fn mode_count(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn shapes(&self) -> &[VectorField] {
        &self.shapes
    }

    /// `Σ σ_j²`.
    pub fn trace(&self) -> f64 {
        self.sigmas.iter().map(|s| s * s).sum()
    }

    pub fn is_active(&self) -> bool {
        !self.sigmas.is_empty()
    }

    /// `f_j(u) = σ_j P(γ ψ_j + λ u)`.
    pub fn apply_coefficient(&self, u: &VectorField, j: usize) -> Result<VectorField> {
        let shape = self
            .shapes
            .get(j)
            .ok_or_else(|| Error::config(format!("shape index {j} out of range")))?;
        let combo = shape
            .scaled(self.additive_weight)
            .add(&u.scaled(self.multiplicative_weight));
        Ok(ops::leray_project(&combo).scaled(self.sigmas[j]))
    }

    /// `P Σ_j f_j(u) ΔW_j`, the forcing injected over one step.
    /// Returns `None` when no modes are active.
    pub fn forcing_sum(&self, u: &VectorField, dw: &[f64]) -> Option<VectorField> {
        if self.sigmas.is_empty() {
            return None;
        }
        assert_eq!(dw.len(), self.sigmas.len(), "one increment per mode");
        let mut acc = VectorField::zeros(u.grid());
        let mut lambda_coef = 0.0;
        for ((shape, &sigma), &d) in self.shapes.iter().zip(&self.sigmas).zip(dw) {
            acc = acc.add(&shape.scaled(self.additive_weight * sigma * d));
            lambda_coef += self.multiplicative_weight * sigma * d;
        }
        acc = acc.add(&u.scaled(lambda_coef));
        Some(ops::leray_project(&acc))
    }

    /// `½ Σ_j ‖f_j(u)‖₂²` for divergence-free `u` (the Itô correction rate in
    /// the free-energy balance).
    pub fn ito_correction(&self, u: &VectorField) -> f64 {
        let lam = self.multiplicative_weight;
        let gam = self.additive_weight;
        let u_l2_sq = {
            let n = u.l2_norm();
            n * n
        };
        let mut acc = 0.0;
        for (shape, &sigma) in self.shapes.iter().zip(&self.sigmas) {
            let cross = shape.inner(u);
            acc += sigma * sigma * (gam * gam + 2.0 * gam * lam * cross + lam * lam * u_l2_sq);
        }
        0.5 * acc
    }

    /// `Σ_j (u, f_j(u))_{L²} ΔW_j`, the martingale increment of the
    /// free-energy balance over one step.
    pub fn martingale_increment(&self, u: &VectorField, dw: &[f64]) -> f64 {
        let lam = self.multiplicative_weight;
        let gam = self.additive_weight;
        let u_l2_sq = {
            let n = u.l2_norm();
            n * n
        };
        let mut acc = 0.0;
        for ((shape, &sigma), &d) in self.shapes.iter().zip(&self.sigmas).zip(dw) {
            acc += sigma * (gam * shape.inner(u) + lam * u_l2_sq) * d;
        }
        acc
    }
}

/// Enumerate divergence-free unit-norm eigenmode shapes ordered by `|k|²`.
fn eigenmode_shapes(grid: &Arc<Grid>, count: usize) -> Vec<VectorField> {
    let n = grid.points_per_side() as i64;
    let max_m = (n / 3).min(8).max(1);
    let mut reps: Vec<(i64, i64)> = Vec::new();
    for mx in -max_m..=max_m {
        for my in -max_m..=max_m {
            if (mx, my) == (0, 0) {
                continue;
            }
            // One representative per conjugate pair.
            if my > 0 || (my == 0 && mx > 0) {
                reps.push((mx, my));
            }
        }
    }
    reps.sort_by_key(|&(mx, my)| (mx * mx + my * my, mx, my));

    let l = grid.box_length();
    let base = 2.0 * std::f64::consts::PI / l;
    let norm = std::f64::consts::SQRT_2 / l;
    let mut shapes = Vec::with_capacity(count);
    'outer: for (mx, my) in reps {
        let (kx, ky) = (base * mx as f64, base * my as f64);
        let kn = (kx * kx + ky * ky).sqrt();
        let (px, py) = (-ky / kn, kx / kn);
        for phase_sin in [false, true] {
            let shape = VectorField::from_fn(grid, |x, y| {
                let arg = kx * x + ky * y;
                let w = if phase_sin { arg.sin() } else { arg.cos() };
                (px * w * norm, py * w * norm)
            });
            shapes.push(shape);
            if shapes.len() == count {
                break 'outer;
            }
        }
    }
    shapes
}

/// Reproducible Brownian increment stream, either drawn from a seeded
/// generator or replayed from a pre-built table (used for coupled
/// refinement studies).
#[derive(Debug, Clone)]
pub struct WienerPath {
    seed: u64,
    source: Source,
    consumed_steps: u64,
}

#[derive(Debug, Clone)]
enum Source {
    Stream(Box<ChaCha8Rng>),
    Table { rows: Vec<Vec<f64>>, cursor: usize },
}

impl WienerPath {
    pub fn new(seed: u64) -> Self {
        WienerPath {
            seed,
            source: Source::Stream(Box::new(ChaCha8Rng::seed_from_u64(seed))),
            consumed_steps: 0,
        }
    }

    /// Replay pre-scaled increments (each row is one step's `ΔW_j` vector).
    pub fn from_table(rows: Vec<Vec<f64>>) -> Self {
        WienerPath { seed: 0, source: Source::Table { rows, cursor: 0 }, consumed_steps: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn consumed_steps(&self) -> u64 {
        self.consumed_steps
    }

    /// Stream position for checkpointing (stream mode only).
    pub fn word_pos(&self) -> Option<u128> {
        match &self.source {
            Source::Stream(rng) => Some(rng.get_word_pos()),
            Source::Table { .. } => None,
        }
    }

    /// Rebuild a stream-mode path at an exact position.
    pub fn restore(seed: u64, word_pos: u128, consumed_steps: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        WienerPath { seed, source: Source::Stream(Box::new(rng)), consumed_steps }
    }

    /// Draw one step's worth of independent `Normal(0, dt)` increments.
    pub fn sample_increments(&mut self, dt: f64, count: usize) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("increment dt must be positive, got {dt}")));
        }
        let out = match &mut self.source {
            Source::Stream(rng) => {
                let scale = dt.sqrt();
                (0..count)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng.as_mut());
                        z * scale
                    })
                    .collect()
            }
            Source::Table { rows, cursor } => {
                let row = rows.get(*cursor).ok_or_else(|| {
                    Error::Wiener(format!("replay table exhausted at step {cursor}"))
                })?;
                if row.len() != count {
                    return Err(Error::Wiener(format!(
                        "replay row has {} increments, expected {count}",
                        row.len()
                    )));
                }
                *cursor += 1;
                row.clone()
            }
        };
        self.consumed_steps += 1;
        Ok(out)
    }
}

/// Materialize a full increment table for `steps` steps of size `dt`.
pub fn increment_table(seed: u64, mode_count: usize, dt: f64, steps: usize) -> Vec<Vec<f64>> {
    let mut path = WienerPath::new(seed);
    (0..steps)
        .map(|_| path.sample_increments(dt, mode_count).expect("stream never exhausts"))
        .collect()
}

/// Pairwise-sum a fine table into the coarse increments of twice the step.
pub fn coarsen_table(fine: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fine.chunks(2)
        .filter(|c| c.len() == 2)
        .map(|c| c[0].iter().zip(&c[1]).map(|(a, b)| a + b).collect())
        .collect()
}

/// Measured growth/Lipschitz constants against their closed-form bounds.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub growth_ratio: f64,
    pub growth_bound: f64,
    pub lipschitz_ratio: f64,
    pub lipschitz_bound: f64,
    pub pass: bool,
}

/// Evaluate the growth and Lipschitz ratios of the coefficient family over a
/// sample set of divergence-free fields.
pub fn verify_hypotheses(spec: &NoiseSpec, samples: &[VectorField], p: f64) -> Result<HypothesisReport> {
    if samples.is_empty() {
        return Err(Error::config("verify_hypotheses needs a nonempty sample set"));
    }
    if spec.mode_count() == 0 {
        return Ok(HypothesisReport {
            growth_ratio: 0.0,
            growth_bound: 0.0,
            lipschitz_ratio: 0.0,
            lipschitz_bound: 0.0,
            pass: true,
        });
    }
    let samples: Vec<VectorField> = samples.iter().map(ops::leray_project).collect();

    let sq_field = |fields: &[VectorField]| -> RealField {
        let grid = fields[0].grid().clone();
        let mut out = RealField::zeros(&grid);
        for f in fields {
            let mag = f.magnitude();
            out = out.zip_with(&mag, |acc, m| acc + m * m);
        }
        out.map(f64::sqrt)
    };

    let mut growth: f64 = 0.0;
    for u in &samples {
        let fj: Vec<VectorField> = (0..spec.mode_count())
            .map(|j| spec.apply_coefficient(u, j))
            .collect::<Result<_>>()?;
        let num = sq_field(&fj).lp_norm(p);
        growth = growth.max(num / (1.0 + u.lp_norm(p)));
    }

    let mut lipschitz: f64 = 0.0;
    for (a, u1) in samples.iter().enumerate() {
        for u2 in samples.iter().skip(a + 1) {
            let denom = u1.sub(u2).lp_norm(p);
            if denom == 0.0 {
                continue;
            }
            let diff: Vec<VectorField> = (0..spec.mode_count())
                .map(|j| {
                    Ok(spec.apply_coefficient(u1, j)?.sub(&spec.apply_coefficient(u2, j)?))
                })
                .collect::<Result<_>>()?;
            lipschitz = lipschitz.max(sq_field(&diff).lp_norm(p) / denom);
        }
    }

    let trace_root = spec.trace().sqrt();
    // Pointwise max over the shape family controls the additive part.
    let grid = samples[0].grid().clone();
    let mut max_shape = RealField::zeros(&grid);
    for shape in spec.shapes() {
        let mag = shape.magnitude();
        max_shape = max_shape.zip_with(&mag, f64::max);
    }
    let growth_bound = trace_root
        * (spec.additive_weight * max_shape.lp_norm(p)).max(spec.multiplicative_weight);
    let lipschitz_bound = spec.multiplicative_weight * trace_root;
    let slack = 1.0 + 1e-9;
    let pass = growth <= growth_bound * slack + 1e-12
        && lipschitz <= lipschitz_bound * slack + 1e-12;
    Ok(HypothesisReport {
        growth_ratio: growth,
        growth_bound,
        lipschitz_ratio: lipschitz,
        lipschitz_bound,
        pass,
    })
}

/// One exponential-Euler step of the Itô equation
/// `dZ = -A Z dt + P f(u) dW`:  `Z⁺ = e^{-dt A}(Z + P Σ_j f_j(u) ΔW_j)`.
pub fn stochastic_convolution_step(
    z: &VectorField,
    u: &VectorField,
    spec: &NoiseSpec,
    path: &mut WienerPath,
    dt: f64,
) -> Result<VectorField> {
    let dw = path.sample_increments(dt, spec.mode_count())?;
    let forced = match spec.forcing_sum(u, &dw) {
        Some(f) => z.add(&f),
        None => z.clone(),
    };
    semigroup::stokes_propagate(&forced, dt)
}
