//! Experiment configuration: one JSON document drives every subcommand.

use std::f64::consts::PI;
use std::path::PathBuf;

use heatprobe_core::dtn::{smooth_boundary_data, smooth_potential};
use heatprobe_core::{
    BoundaryField, Grid, ModulusFamily, ModulusParams, NewtonOptions, Nonlinearity, Potential, ReconstructionConfig, Sign,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub reference: PotentialSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub reference_nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub pairing: PairingConfig,
    #[serde(default)]
    pub cgo: CgoConfig,
    #[serde(default)]
    pub carleman: CarlemanConfig,
    /// Defaults to full data with reference probes.
    #[serde(default)]
    pub reconstruction: Option<ReconstructionConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub recovery: RecoveryAxes,
    #[serde(default)]
    pub newton: NewtonConfig,
}

fn default_theta() -> f64 {
    0.5
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridConfig::default(),
            theta: default_theta(),
            seed: 0,
            threads: None,
            output_dir: None,
            potential: PotentialSpec::Sine { amplitude: 0.3 },
            reference: PotentialSpec::Zero,
            boundary: BoundarySpec::default(),
            nonlinearity: NonlinearitySpec::default(),
            reference_nonlinearity: NonlinearitySpec::Linear { slope: 0.5 },
            pairing: PairingConfig::default(),
            cgo: CgoConfig::default(),
            carleman: CarlemanConfig::default(),
            reconstruction: Some(desk_reconstruction(1)),
            sweep: SweepConfig::default(),
            recovery: RecoveryAxes::default(),
            newton: NewtonConfig::default(),
        }
    }
}

/// Fixed `ρ = 12`, `R = 10`: the distance-driven rule gives `ρ < 2` on desk-sized grids.
pub fn desk_reconstruction(n: usize) -> ReconstructionConfig {
    let mut cfg = ReconstructionConfig::full(n);
    cfg.rho = Some(12.0);
    cfg.cutoff = Some(10.0);
    cfg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub nx: usize,
    pub nt: usize,
    #[serde(default = "one")]
    pub t_final: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 1, nx: 65, nt: 257, t_final: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `a·Π sin(πx_i)·sin(πt/T)`.
    Sine { amplitude: f64 },
    /// `a·cos(πx₁)·sin(πx₂)·sin(πt/T)`, without the `x₂` factor in one dimension.
    Mixed { amplitude: f64 },
    /// Seeded smooth random potential with `sup|q| = bound`.
    Random { bound: f64 },
}

impl PotentialSpec {
    pub fn build(&self, grid: &Grid, seed: u64) -> heatprobe_core::Result<Potential> {
        let t_final = grid.t_final();
        let two_d = grid.dim() == 2;
        match *self {
            PotentialSpec::Zero => Ok(Potential::zero(grid)),
            PotentialSpec::Constant { value } => Potential::from_fn(grid, |_, _| value),
            PotentialSpec::Sine { amplitude } => Potential::from_fn(grid, |x, t| {
                let y = if two_d { (PI * x[1]).sin() } else { 1.0 };
                amplitude * (PI * x[0]).sin() * y * (PI * t / t_final).sin()
            }),
            PotentialSpec::Mixed { amplitude } => Potential::from_fn(grid, |x, t| {
                let y = if two_d { (PI * x[1]).sin() } else { 1.0 };
                amplitude * (PI * x[0]).cos() * y * (PI * t / t_final).sin()
            }),
            PotentialSpec::Random { bound } => smooth_potential(grid, bound, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    /// Seeded smooth data vanishing at `t = 0`.
    #[default]
    Random,
    /// `a·sin²(πt/T)` on every boundary node.
    Bump { amplitude: f64 },
    /// `u ≡ value` on `Σ` and at `t = 0`.
    Level { value: f64 },
}

impl BoundarySpec {
    pub fn build(&self, grid: &Grid, seed: u64) -> (BoundaryField, Option<Vec<f64>>) {
        let t_final = grid.t_final();
        match *self {
            BoundarySpec::Random => (smooth_boundary_data(grid, &mut ChaCha8Rng::seed_from_u64(seed)), None),
            BoundarySpec::Bump { amplitude } => (
                BoundaryField::from_fn(grid, |_, _, t| Complex64::new(amplitude * (PI * t / t_final).sin().powi(2), 0.0)),
                None,
            ),
            BoundarySpec::Level { value } => (
                BoundaryField::from_fn(grid, |_, _, _| Complex64::new(value, 0.0)),
                Some(vec![value; grid.nspace()]),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Linear { slope: f64 },
    /// `Σ c_k u^k`.
    Polynomial { coefficients: Vec<f64> },
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        NonlinearitySpec::Polynomial { coefficients: vec![0.0, 1.0, 0.0, 0.5] }
    }
}

impl NonlinearitySpec {
    pub fn build(&self) -> Nonlinearity {
        match self {
            NonlinearitySpec::Linear { slope } => Nonlinearity::linear(*slope),
            NonlinearitySpec::Polynomial { coefficients } => Nonlinearity::polynomial(coefficients),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairingConfig {
    pub cases: usize,
    /// Largest accepted relative gap between the boundary and volume pairings.
    pub threshold: f64,
    pub bound: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig { cases: 10, threshold: 0.05, bound: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgoConfig {
    pub sign: Sign,
    /// Defaults to `e₁`.
    pub omega: Option<Vec<f64>>,
    /// Defaults to `0`.
    pub xi: Option<Vec<f64>>,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Default for CgoConfig {
    fn default() -> Self {
        CgoConfig { sign: Sign::Minus, omega: None, xi: None, tau: vec![0.0], rho: vec![8.0, 16.0, 32.0, 64.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanConfig {
    pub samples: usize,
    pub rho: Vec<f64>,
    pub omega: Option<Vec<f64>>,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        CarlemanConfig { samples: 20, rho: vec![4.0, 8.0, 16.0, 32.0], omega: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusSpec {
    pub family: ModulusFamily,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Contrast amplitudes `λ` in `q = q̃ + λ·p`.
    pub levels: Vec<f64>,
    /// Relative noise added to the data map at each level; 0 keeps the sweep noiseless.
    pub noise_ratio: f64,
    pub modulus: ModulusSpec,
    /// Second modulus refitted on the same records.
    pub alternate: Option<ModulusSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            levels: vec![0.3, 0.05, 0.01, 0.002, 0.0003],
            noise_ratio: 0.0,
            modulus: ModulusSpec { family: ModulusFamily::Psi, s: 0.15 },
            alternate: Some(ModulusSpec { family: ModulusFamily::Phi, s: 0.3 }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryAxes {
    pub levels: Vec<f64>,
    pub window: usize,
    pub lambda: f64,
}

impl Default for RecoveryAxes {
    fn default() -> Self {
        RecoveryAxes { levels: vec![-0.5, 0.0, 0.5], window: 3, lambda: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Step sizes of the finite-difference check of the linearization.
    pub fd_eps: Vec<f64>,
    /// Bound `c_λ` on `max|u|`; `None` skips the check.
    pub a_priori: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        let d = NewtonOptions::default();
        NewtonConfig {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            max_halvings: d.max_halvings,
            fd_eps: vec![1e-2, 1e-3, 1e-4, 1e-5],
            a_priori: None,
        }
    }
}

impl NewtonConfig {
    pub fn options(&self) -> NewtonOptions {
        NewtonOptions { max_iterations: self.max_iterations, tolerance: self.tolerance, max_halvings: self.max_halvings }
    }
}

/// Seeds of the independent random streams.
pub mod stream {
    pub const POTENTIAL: u64 = 1;
    pub const REFERENCE: u64 = 2;
    pub const BOUNDARY: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const SAMPLES: u64 = 5;
    pub const NOISE: u64 = 6;
}

pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

/// Everything a subcommand needs, checked before any numerics run.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub scheme: heatprobe_core::Scheme,
    pub potential: Potential,
    pub reference: Potential,
    pub reconstruction: ReconstructionConfig,
    pub modulus: ModulusParams,
    pub alternate: Option<ModulusParams>,
}

fn config_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{what}: {e}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_err("parse", e))
    }

    pub fn prepare(self) -> Result<Prepared, CliError> {
        let g = &self.grid;
        let grid = Grid::new(g.n, g.nx, g.nt, g.t_final).map_err(|e| config_err("grid", e))?;
        let scheme = heatprobe_core::Scheme::new(self.theta).map_err(|e| config_err("theta", e))?;
        let potential = self
            .potential
            .build(&grid, stream_seed(self.seed, stream::POTENTIAL))
            .map_err(|e| config_err("potential", e))?;
        let reference = self
            .reference
            .build(&grid, stream_seed(self.seed, stream::REFERENCE))
            .map_err(|e| config_err("reference", e))?;
        let reconstruction = self.reconstruction.clone().unwrap_or_else(|| ReconstructionConfig::full(grid.dim()));
        reconstruction.validate(&grid).map_err(|e| config_err("reconstruction", e))?;
        if reconstruction.omega0.len() != grid.dim() {
            return Err(CliError::Config(format!("reconstruction: ω₀ needs {} components", grid.dim())));
        }
        let m = self.sweep.modulus;
        let modulus = ModulusParams::new(m.family, m.s, grid.dim()).map_err(|e| config_err("sweep.modulus", e))?;
        let alternate = self
            .sweep
            .alternate
            .map(|m| ModulusParams::new(m.family, m.s, grid.dim()))
            .transpose()
            .map_err(|e| config_err("sweep.alternate", e))?;
        for (name, v) in [("cgo.omega", &self.cgo.omega), ("carleman.omega", &self.carleman.omega)] {
            if let Some(w) = v {
                let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if w.len() != grid.dim() || (norm - 1.0).abs() > 1e-12 {
                    return Err(CliError::Config(format!("{name} must be a unit vector with {} components", grid.dim())));
                }
            }
        }
        if self.newton.tolerance <= 0.0 || self.newton.max_iterations == 0 {
            return Err(CliError::Config("newton: tolerance and iteration count must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        Ok(Prepared { config: self, grid, scheme, potential, reference, reconstruction, modulus, alternate })
    }
}

pub fn unit_axis(dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    w[0] = 1.0;
    w
}
