//! Run configuration: one human-editable TOML tree with explicit defaults.
//!
//! Parsing applies every default, so serializing the parsed value back out
//! reproduces the fully-resolved configuration; the archived copy in each
//! output directory is therefore self-contained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::InitialData;
use crate::stepper::Scheme;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    /// Initial-data recipes, applied in order.
    #[serde(default = "default_initial")]
    pub initial: Vec<InitialData>,
    #[serde(default)]
    pub exponents: ExponentsConfig,
    #[serde(default)]
    pub gamma: GammaConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub stepper: StepperBlock,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points_per_side: usize,
    /// Box side length; defaults to 16π so compact data sees negligible
    /// periodic images.
    #[serde(default = "default_box_length")]
    pub box_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub mode_count: usize,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_spectrum_exponent")]
    pub spectrum_exponent: f64,
    /// γ, weight of the state-independent forcing.
    #[serde(default = "default_one")]
    pub additive_weight: f64,
    /// λ, weight of the state-proportional forcing.
    #[serde(default)]
    pub multiplicative_weight: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepperBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_iters")]
    pub picard_max_iters: usize,
    /// θ_m level; infinite disables the cutoff.
    #[serde(default = "default_inf")]
    pub cutoff_level: f64,
    #[serde(default = "default_norm_cap")]
    pub blowup_norm_cap: f64,
    #[serde(default = "default_entropy_cap")]
    pub entropy_cap: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Steps between checkpoints; 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Density below `-tol × max n` is recorded as a positivity violation.
    #[serde(default = "default_positivity_tol")]
    pub positivity_tolerance: f64,
    /// Clamp negative density to zero and renormalize the mass (off by
    /// default: clamping silently breaks the energy identities under test).
    #[serde(default)]
    pub clamp_negative_density: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_path_count")]
    pub path_count: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_k_moments")]
    pub k_moments: Vec<u32>,
    /// Worker threads; 0 lets the runtime decide. The `KSNS_WORKERS`
    /// environment variable overrides this.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Steps between diagnostics rows.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_points() -> usize {
    128
}
fn default_box_length() -> f64 {
    16.0 * std::f64::consts::PI
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_delta() -> f64 {
    0.1
}
fn default_sigma0() -> f64 {
    0.1
}
fn default_spectrum_exponent() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_scheme() -> Scheme {
    Scheme::ExponentialEuler
}
fn default_picard_tol() -> f64 {
    1e-8
}
fn default_picard_iters() -> usize {
    50
}
fn default_inf() -> f64 {
    f64::INFINITY
}
fn default_norm_cap() -> f64 {
    1e6
}
fn default_entropy_cap() -> f64 {
    1e9
}
fn default_t_final() -> f64 {
    1.0
}
fn default_positivity_tol() -> f64 {
    1e-10
}
fn default_path_count() -> usize {
    64
}
fn default_master_seed() -> u64 {
    20260401
}
fn default_k_moments() -> Vec<u32> {
    vec![1, 2]
}
fn default_directory() -> String {
    "out".to_string()
}
fn default_cadence() -> u64 {
    10
}
fn default_formats() -> Vec<String> {
    vec!["csv".to_string()]
}
fn default_initial() -> Vec<InitialData> {
    vec![
        InitialData::GaussianDensity {
            mass: 4.0 * std::f64::consts::PI,
            sigma: 1.25,
            center: None,
        },
        InitialData::ZeroVelocity,
    ]
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points_per_side: default_points(), box_length: default_box_length() }
    }
}
impl Default for ExponentsConfig {
    fn default() -> Self {
        ExponentsConfig { epsilon: default_epsilon() }
    }
}
impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig { delta: default_delta() }
    }
}
impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            mode_count: 0,
            sigma0: default_sigma0(),
            spectrum_exponent: default_spectrum_exponent(),
            additive_weight: default_one(),
            multiplicative_weight: 0.0,
            seed: 0,
        }
    }
}
impl Default for StepperBlock {
    fn default() -> Self {
        StepperBlock {
            dt: default_dt(),
            scheme: default_scheme(),
            picard_tol: default_picard_tol(),
            picard_max_iters: default_picard_iters(),
            cutoff_level: default_inf(),
            blowup_norm_cap: default_norm_cap(),
            entropy_cap: default_entropy_cap(),
            t_final: default_t_final(),
            checkpoint_every: 0,
            positivity_tolerance: default_positivity_tol(),
            clamp_negative_density: false,
        }
    }
}
impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            path_count: default_path_count(),
            master_seed: default_master_seed(),
            k_moments: default_k_moments(),
            workers: 0,
        }
    }
}
impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            cadence: default_cadence(),
            formats: default_formats(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridConfig::default(),
            initial: default_initial(),
            exponents: ExponentsConfig::default(),
            gamma: GammaConfig::default(),
            noise: NoiseConfig::default(),
            stepper: StepperBlock::default(),
            ensemble: EnsembleConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Serialize the fully-resolved configuration (every default explicit).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.points_per_side;
        if n < 16 || n % 2 != 0 {
            return Err(Error::config(format!(
                "grid.points_per_side: must be an even integer >= 16, got {n}"
            )));
        }
        if !(self.grid.box_length > 0.0) {
            return Err(Error::config(format!(
                "grid.box_length: must be positive, got {}",
                self.grid.box_length
            )));
        }
        if !(self.exponents.epsilon > 0.0 && self.exponents.epsilon < 2.0 / 129.0) {
            return Err(Error::config(format!(
                "exponents.epsilon: must lie in (0, 2/129 ≈ 0.01550), got {}",
                self.exponents.epsilon
            )));
        }
        if !(self.gamma.delta > 0.0) {
            return Err(Error::config(format!(
                "gamma.delta: must be positive, got {}",
                self.gamma.delta
            )));
        }
        if !(self.stepper.dt > 0.0) {
            return Err(Error::config(format!(
                "stepper.dt: must be positive, got {}",
                self.stepper.dt
            )));
        }
        if self.stepper.t_final < 0.0 {
            return Err(Error::config(format!(
                "stepper.t_final: must be nonnegative, got {}",
                self.stepper.t_final
            )));
        }
        if !(self.stepper.picard_tol > 0.0) {
            return Err(Error::config(format!(
                "stepper.picard_tol: must be positive, got {}",
                self.stepper.picard_tol
            )));
        }
        if !(self.stepper.cutoff_level > 0.0) {
            return Err(Error::config(format!(
                "stepper.cutoff_level: must be positive (or inf), got {}",
                self.stepper.cutoff_level
            )));
        }
        if !(self.stepper.blowup_norm_cap > 0.0) || !(self.stepper.entropy_cap > 0.0) {
            return Err(Error::config(
                "stepper.blowup_norm_cap / stepper.entropy_cap: must be positive".to_string(),
            ));
        }
        if self.noise.mode_count > 0 && !(self.noise.sigma0 > 0.0) {
            return Err(Error::config(format!(
                "noise.sigma0: must be positive when noise.mode_count > 0, got {}",
                self.noise.sigma0
            )));
        }
        if self.noise.additive_weight < 0.0 || self.noise.multiplicative_weight < 0.0 {
            return Err(Error::config(
                "noise.additive_weight / noise.multiplicative_weight: must be nonnegative"
                    .to_string(),
            ));
        }
        if self.ensemble.path_count < 2 {
            return Err(Error::config(format!(
                "ensemble.path_count: must be at least 2, got {}",
                self.ensemble.path_count
            )));
        }
        if self.ensemble.k_moments.iter().any(|&k| k < 1) {
            return Err(Error::config("ensemble.k_moments: entries must be >= 1".to_string()));
        }
        if self.output.cadence == 0 {
            return Err(Error::config("output.cadence: must be >= 1".to_string()));
        }
        for recipe in &self.initial {
            match *recipe {
                InitialData::GaussianDensity { mass, sigma, .. } => {
                    if mass < 0.0 {
                        return Err(Error::config(format!(
                            "initial.gaussian_density.mass: must be >= 0, got {mass}"
                        )));
                    }
                    if !(sigma > 0.0) {
                        return Err(Error::config(format!(
                            "initial.gaussian_density.sigma: must be > 0, got {sigma}"
                        )));
                    }
                }
                InitialData::UniformDensity { mass } => {
                    if mass < 0.0 {
                        return Err(Error::config(format!(
                            "initial.uniform_density.mass: must be >= 0, got {mass}"
                        )));
                    }
                }
                InitialData::TaylorGreenVelocity { .. } | InitialData::ZeroVelocity => {}
            }
        }
        Ok(())
    }

    pub fn stepper_config(&self) -> crate::stepper::StepperConfig {
        crate::stepper::StepperConfig {
            dt: self.stepper.dt,
            scheme: self.stepper.scheme,
            picard_tol: self.stepper.picard_tol,
            picard_max_iters: self.stepper.picard_max_iters,
            cutoff_level: self.stepper.cutoff_level,
            blowup_norm_cap: self.stepper.blowup_norm_cap,
            entropy_cap: self.stepper.entropy_cap,
        }
    }
}
