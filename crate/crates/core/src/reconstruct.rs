//! Fourier-slice inversion from boundary pairings with CGO probes.
//!
//! A slice at `ζ = (ξ, τ)` needs a direction `ω ⊥ ξ`. The forward probe
//! `u_+` carries the oscillation `e^{−iζ·(x,t)}`, the backward probe `u_−`
//! is built for the reference potential, and
//! `(2π)^{−(n+1)/2} ⟨(Λ_data − Λ_q̃) u_+|_Σ, u_−|_Σ⟩ ≈ p̂(ζ)`.
//! Slices on the padded-torus lattice inside `|ζ| ≤ R` are inverted by a
//! truncated inverse DFT. Errors are measured on the torus, where the
//! truncation error is exactly the spectral tail.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgo::{build_cgo, check_overflow, rho_overflow, CgoParams};
use crate::dtn::{
    assemble_dtn_matrix, noise_matrix, oracle_pairing, Basis, BasisSpec, DtnMatrix, DtnOracle, NoisyDtn, SimulatedDtn,
};
use crate::error::{Error, Result};
use crate::field::{Potential, ScalarField};
use crate::forward::Scheme;
use crate::grid::{check_unit, DirectionMask, Grid, Sign};
use crate::norms::{modulus_extended, ModulusParams, SobolevExponents, Torus};
use crate::stats::fit_modulus_constant;

/// Boundary access: all of `Σ`, or inputs and outputs near `Γ_{±,ω₀}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Full,
    Partial,
}

/// Which potential the forward probe is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// The true potential; only possible for simulated data.
    Clairvoyant,
    /// The reference potential `q̃`.
    Reference,
}

/// Unit vector orthogonal to `ξ`, or `Infeasible`.
///
/// Full mode rotates the first coordinate axis not parallel to `ξ` into
/// `ξ^⊥`; partial mode projects `ω₀` and accepts the result only inside the
/// cap `|ω − ω₀| ≤ δ`, i.e. when the projection has norm `≥ 1 − δ²/2`.
pub fn choose_omega(xi: &[f64], mode: DataMode, omega0: &[f64], delta: f64) -> Result<Vec<f64>> {
    let n = xi.len();
    if omega0.len() != n {
        return Err(Error::InvalidArgument(format!("ω₀ has {} components, ξ has {n}", omega0.len())));
    }
    let w0 = norm(omega0);
    if (w0 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("ω₀ must be a unit vector, |ω₀| = {w0}")));
    }
    let xn = norm(xi);
    if xn == 0.0 {
        return Ok(omega0.to_vec());
    }
    let project = |v: &[f64]| -> Vec<f64> {
        let c = dot(v, xi) / (xn * xn);
        v.iter().zip(xi).map(|(a, b)| a - c * b).collect()
    };
    match mode {
        DataMode::Full => {
            for axis in 0..n {
                let mut e = vec![0.0; n];
                e[axis] = 1.0;
                let p = project(&e);
                let pn = norm(&p);
                if pn > 1e-12 {
                    return Ok(p.iter().map(|v| v / pn).collect());
                }
            }
            Err(Error::Infeasible(xi.to_vec()))
        }
        DataMode::Partial => {
            let p = project(omega0);
            let pn = norm(&p);
            if pn < (1.0 - 0.5 * delta * delta).max(1e-12) {
                return Err(Error::Infeasible(xi.to_vec()));
            }
            Ok(p.iter().map(|v| v / pn).collect())
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Boundary geometry of partial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialGeometry {
    pub omega0: Vec<f64>,
    /// Radius of the direction cap `O_δ`.
    pub cone: f64,
    /// Probes vanish where `∓ν·ω` exceeds this threshold.
    pub mask_threshold: f64,
}

impl PartialGeometry {
    /// Masks where `u_+` and `u_−` vanish for direction `ω`.
    pub fn vanish_masks(&self, grid: &Grid, omega: &[f64]) -> Result<(DirectionMask, DirectionMask)> {
        Ok((
            DirectionMask::new(grid, omega, self.mask_threshold, Sign::Minus)?,
            DirectionMask::new(grid, omega, self.mask_threshold, Sign::Plus)?,
        ))
    }

    /// Input and observation sets of the partial map, as seen from `ω₀`.
    pub fn access_masks(&self, grid: &Grid) -> Result<(DirectionMask, DirectionMask)> {
        let (m_plus, m_minus) = self.vanish_masks(grid, &self.omega0)?;
        Ok((m_plus.complement(), m_minus.complement()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyNode {
    /// Flat torus index.
    pub index: usize,
    pub xi: Vec<f64>,
    pub tau: f64,
    /// `None` for inadmissible nodes.
    pub omega: Option<Vec<f64>>,
    pub value: Complex64,
}

impl FrequencyNode {
    pub fn is_admissible(&self) -> bool {
        self.omega.is_some()
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.xi, &self.xi) + self.tau * self.tau).sqrt()
    }
}

/// Torus lattice nodes inside `|ζ| ≤ R` with their probe directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub radius: f64,
    pub mode: DataMode,
    pub nodes: Vec<FrequencyNode>,
}

impl FrequencyGrid {
    pub fn new(torus: &Torus, radius: f64, mode: DataMode, omega0: &[f64], cone: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff radius must be non-negative, got {radius}")));
        }
        let n = torus.grid().dim();
        check_unit(torus.grid(), omega0)?;
        let mut nodes = Vec::new();
        for index in 0..torus.len() {
            if torus.frequency_norm(index) > radius {
                continue;
            }
            let z = torus.frequency(index);
            let xi = z[..n].to_vec();
            let omega = match choose_omega(&xi, mode, omega0, cone) {
                Ok(w) => Some(w),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            };
            nodes.push(FrequencyNode { index, xi, tau: z[2], omega, value: Complex64::new(0.0, 0.0) });
        }
        Ok(FrequencyGrid { radius, mode, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn admissible_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_admissible()).count()
    }

    /// Fills every node with the exact spectrum, admissible or not.
    pub fn fill_exact(&mut self, spectrum: &[Complex64]) {
        for node in &mut self.nodes {
            node.value = spectrum[node.index];
        }
    }
}

/// Builds probe pairs and evaluates boundary pairings against a data oracle.
pub struct SliceProber<'a> {
    pub scheme: Scheme,
    pub data: &'a dyn DtnOracle,
    pub reference: SimulatedDtn,
    /// Potential used for the forward probe (`q` when clairvoyant, else `q̃`).
    pub probe_potential: Potential,
    pub partial: Option<PartialGeometry>,
}

impl<'a> SliceProber<'a> {
    pub fn new(scheme: Scheme, data: &'a dyn DtnOracle, q_ref: &Potential, probe_potential: &Potential) -> Result<Self> {
        data.grid().check_same(q_ref.grid(), "data oracle and reference potential")?;
        q_ref.grid().check_same(probe_potential.grid(), "reference and probe potentials")?;
        Ok(SliceProber {
            scheme,
            data,
            reference: SimulatedDtn::new(scheme, q_ref.clone()),
            probe_potential: probe_potential.clone(),
            partial: None,
        })
    }

    pub fn with_partial(mut self, geometry: PartialGeometry) -> Self {
        self.partial = Some(geometry);
        self
    }

    /// Approximation of `p̂(ζ)` at `ζ = (ξ, τ)` with direction `ω ⊥ ξ`.
    pub fn slice(&self, xi: &[f64], tau: f64, omega: &[f64], rho: f64) -> Result<Complex64> {
        let grid = self.reference.potential.grid();
        check_overflow(grid, rho)?;
        let masks = match &self.partial {
            Some(geo) => Some(geo.vanish_masks(grid, omega)?),
            None => None,
        };
        let plus = CgoParams::new(Sign::Plus, omega.to_vec(), xi.to_vec(), tau, rho);
        let minus = CgoParams::new(Sign::Minus, omega.to_vec(), vec![0.0; xi.len()], 0.0, rho);
        let u_plus = build_cgo(&self.scheme, &plus, &self.probe_potential, masks.as_ref().map(|m| &m.0))?;
        let u_minus = build_cgo(&self.scheme, &minus, &self.reference.potential, masks.as_ref().map(|m| &m.1))?;
        let g = u_plus.boundary_trace()?;
        let h = u_minus.boundary_trace()?;
        let pairing = oracle_pairing(self.data, &self.reference, &g, &h)?;
        Ok(pairing * (2.0 * PI).powf(-0.5 * (grid.dim() + 1) as f64))
    }

    /// Fills the admissible nodes; mirror nodes reuse `p̂(−ζ) = conj p̂(ζ)`.
    pub fn fill(&self, torus: &Torus, freq: &mut FrequencyGrid, rho: f64) -> Result<()> {
        let position: std::collections::HashMap<usize, usize> =
            freq.nodes.iter().enumerate().map(|(i, n)| (n.index, i)).collect();
        let mut canonical = Vec::new();
        let mut mirror = vec![None; freq.nodes.len()];
        for (i, node) in freq.nodes.iter().enumerate() {
            if !node.is_admissible() {
                continue;
            }
            let k = torus.signed_lattice(node.index);
            let neg = torus.index_of_signed([-k[0], -k[1], -k[2]]);
            match position.get(&neg) {
                Some(&j) if j < i && freq.nodes[j].is_admissible() => mirror[i] = Some(j),
                _ => canonical.push(i),
            }
        }
        let values: Vec<(usize, Complex64)> = canonical
            .par_iter()
            .map(|&i| {
                let node = &freq.nodes[i];
                let omega = node.omega.as_ref().expect("admissible");
                self.slice(&node.xi, node.tau, omega, rho).map(|v| (i, v))
            })
            .collect::<Result<_>>()?;
        for (i, v) in values {
            freq.nodes[i].value = v;
        }
        for i in 0..freq.nodes.len() {
            if let Some(j) = mirror[i] {
                freq.nodes[i].value = freq.nodes[j].value.conj();
            }
        }
        Ok(())
    }
}

/// One slice with probes built as in [`SliceProber`].
pub fn fourier_slice(
    scheme: &Scheme,
    data: &dyn DtnOracle,
    q_ref: &Potential,
    probe_potential: &Potential,
    zeta: (&[f64], f64),
    omega: &[f64],
    rho: f64,
) -> Result<Complex64> {
    SliceProber::new(*scheme, data, q_ref, probe_potential)?.slice(zeta.0, zeta.1, omega, rho)
}

/// Low-pass estimate on the padded torus.
#[derive(Clone, Debug)]
pub struct Inversion {
    /// Values on the whole torus box.
    pub torus_values: Vec<Complex64>,
    /// Real part restricted to `Q̄`.
    pub estimate: Potential,
    /// Largest imaginary part on `Q̄`.
    pub imaginary_residue: f64,
}

/// Inverse DFT of the slices inside `|ζ| ≤ R`, zero elsewhere.
pub fn invert_cutoff(torus: &Torus, freq: &FrequencyGrid, radius: f64) -> Result<Inversion> {
    if freq.is_empty() {
        return Err(Error::Degenerate("no frequency nodes inside the cutoff".into()));
    }
    let mut spectrum = vec![Complex64::new(0.0, 0.0); torus.len()];
    for node in &freq.nodes {
        if node.norm() <= radius {
            spectrum[node.index] = node.value;
        }
    }
    let torus_values = torus.synthesize(&spectrum);
    let restricted = torus.restrict(&torus_values);
    let imaginary_residue = restricted.imag_part().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let estimate = Potential::from_values(torus.grid(), restricted.real_part())?;
    Ok(Inversion { torus_values, estimate, imaginary_residue })
}

/// `H^{−1}` distance on the torus between an estimate and the zero extension of `p`.
pub fn torus_error(torus: &Torus, torus_values: &[Complex64], p: &ScalarField) -> Result<f64> {
    let mut diff = torus.embed(p)?;
    for (d, v) in diff.iter_mut().zip(torus_values) {
        *d = *v - *d;
    }
    Ok(torus.hminus1_of_spectrum(&torus.spectrum_of_values(&diff)))
}

/// `H^{−1}` norm of the part of `p̂` outside `|ζ| ≤ R`.
pub fn tail_error(torus: &Torus, p: &ScalarField, radius: f64) -> Result<f64> {
    let mut spec = torus.spectrum(p)?;
    for (i, v) in spec.iter_mut().enumerate() {
        if torus.frequency_norm(i) <= radius {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(torus.hminus1_of_spectrum(&spec))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Exponent of the cutoff rule `R = ρ^s`.
    pub s: f64,
    /// Fixed cutoff radius; `None` selects `R = ρ^s`.
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// Fixed probe parameter; `None` selects it from the measured distance.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Lower clamp for the selected `ρ`.
    #[serde(default)]
    pub rho_min: Option<f64>,
    /// `c` in `e^{cρ²}`; defaults to `T + sup|x|`.
    #[serde(default)]
    pub exponent_constant: Option<f64>,
    pub mode: DataMode,
    pub probe: ProbeMode,
    pub omega0: Vec<f64>,
    #[serde(default = "default_cone")]
    pub cone: f64,
    #[serde(default = "default_mask_threshold")]
    pub mask_threshold: f64,
    /// Basis used to measure operator distances.
    pub basis: BasisSpec,
}

fn default_cone() -> f64 {
    0.3
}

fn default_mask_threshold() -> f64 {
    0.5
}

impl ReconstructionConfig {
    pub fn full(n: usize) -> Self {
        let mut omega0 = vec![0.0; n];
        omega0[0] = 1.0;
        ReconstructionConfig {
            s: 0.2,
            cutoff: None,
            rho: None,
            rho_min: None,
            exponent_constant: None,
            mode: DataMode::Full,
            probe: ProbeMode::Reference,
            omega0,
            cone: default_cone(),
            mask_threshold: default_mask_threshold(),
            basis: BasisSpec { space_modes: 2, time_modes: 3, initial_modes: 0 },
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_unit(grid, &self.omega0)?;
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidArgument(format!("cutoff exponent must lie in (0,1), got {}", self.s)));
        }
        if let Some(r) = self.cutoff {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("cutoff radius must be positive, got {r}")));
            }
        }
        if !(self.cone > 0.0 && self.cone < 2.0) {
            return Err(Error::InvalidArgument(format!("direction cap must lie in (0,2), got {}", self.cone)));
        }
        Ok(())
    }

    fn partial_geometry(&self) -> Option<PartialGeometry> {
        (self.mode == DataMode::Partial).then(|| PartialGeometry {
            omega0: self.omega0.clone(),
            cone: self.cone,
            mask_threshold: self.mask_threshold,
        })
    }
}

/// Outcome of the parameter rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterChoice {
    pub rho: f64,
    pub radius: f64,
    /// `(|ln δ|/(2c))^{1/2}` before clamping.
    pub raw_rho: f64,
    /// `δ ≥ e^{−2}` or `ρ ≤ 2`: return the zero estimate.
    pub trivial: bool,
    /// The overflow clamp was active.
    pub saturated: bool,
}

/// `ρ = (|ln δ|/(2c))^{1/2}` clamped to `[ρ_min, ρ_overflow]`, `R = ρ^s`.
pub fn select_parameters(cfg: &ReconstructionConfig, grid: &Grid, delta: f64) -> ParameterChoice {
    let c = cfg.exponent_constant.unwrap_or(grid.t_final() + grid.radius());
    let raw_rho = if delta > 0.0 { (delta.ln().abs() / (2.0 * c)).sqrt() } else { f64::INFINITY };
    let cap = rho_overflow(grid);
    let mut saturated = false;
    let rho = match cfg.rho {
        Some(r) => r,
        None => {
            let mut r = raw_rho.max(cfg.rho_min.unwrap_or(0.0));
            if r > cap {
                r = cap;
                saturated = true;
            }
            r
        }
    };
    let radius = cfg.cutoff.unwrap_or_else(|| rho.powf(cfg.s));
    // a fixed ρ overrides the distance rule, never the ρ > 2 floor
    let trivial = rho <= 2.0 || (cfg.rho.is_none() && delta >= (-2.0f64).exp());
    ParameterChoice { rho, radius, raw_rho, trivial, saturated }
}

/// Measures `‖Λ_data − Λ_q̃‖` in the weighted basis norm.
pub struct DeltaMeter {
    pub input: Basis,
    pub output: Basis,
    pub obs: Option<DirectionMask>,
    pub exponents: SobolevExponents,
    pub reference: DtnMatrix,
}

impl DeltaMeter {
    pub fn new(cfg: &ReconstructionConfig, scheme: &Scheme, q_ref: &Potential) -> Result<Self> {
        let grid = q_ref.grid();
        let (input, output, obs) = match cfg.partial_geometry() {
            Some(geo) => {
                let (inp, out) = geo.access_masks(grid)?;
                (Basis::on_mask(grid, cfg.basis, &inp)?, Basis::on_mask(grid, cfg.basis, &out)?, Some(out))
            }
            None => (Basis::new(grid, cfg.basis)?, Basis::new(grid, cfg.basis)?, None),
        };
        let exponents = SobolevExponents::dtn_difference();
        let reference = SimulatedDtn::new(*scheme, q_ref.clone());
        let reference = assemble_dtn_matrix(&reference, &input, &output, obs.as_ref(), exponents)?;
        Ok(DeltaMeter { input, output, obs, exponents, reference })
    }

    pub fn measure(&self, data: &dyn DtnOracle) -> Result<f64> {
        let m = assemble_dtn_matrix(data, &self.input, &self.output, self.obs.as_ref(), self.exponents)?;
        Ok(m.difference(&self.reference)?.operator_norm())
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub inversion: Inversion,
    pub params: ParameterChoice,
    pub delta: f64,
    pub slices: FrequencyGrid,
    /// Torus `H^{−1}` error when the truth is known.
    pub error: Option<f64>,
}

/// Full pipeline with the distance taken from `meter`.
pub fn reconstruct_with(
    scheme: &Scheme,
    data: &dyn DtnOracle,
    q_ref: &Potential,
    cfg: &ReconstructionConfig,
    meter: &DeltaMeter,
    truth: Option<&Potential>,
) -> Result<Reconstruction> {
    let grid = q_ref.grid();
    cfg.validate(grid)?;
    let delta = meter.measure(data)?;
    let params = select_parameters(cfg, grid, delta);
    let torus = Torus::new(grid);
    let mut slices = FrequencyGrid::new(&torus, params.radius, cfg.mode, &cfg.omega0, cfg.cone)?;
    if params.trivial {
        log::info!("distance {delta:.3e} selects the trivial branch");
    } else {
        let probe_potential = match (cfg.probe, truth) {
            (ProbeMode::Clairvoyant, Some(q)) => q.clone(),
            (ProbeMode::Clairvoyant, None) => {
                return Err(Error::InvalidArgument("clairvoyant probes need the true potential".into()))
            }
            (ProbeMode::Reference, _) => q_ref.clone(),
        };
        let mut prober = SliceProber::new(*scheme, data, q_ref, &probe_potential)?;
        if let Some(geo) = cfg.partial_geometry() {
            prober = prober.with_partial(geo);
        }
        prober.fill(&torus, &mut slices, params.rho)?;
    }
    let inversion = invert_cutoff(&torus, &slices, params.radius)?;
    let error = match truth {
        Some(q) => Some(torus_error(&torus, &inversion.torus_values, &q.difference(q_ref)?)?),
        None => None,
    };
    Ok(Reconstruction { inversion, params, delta, slices, error })
}

pub fn reconstruct(
    scheme: &Scheme,
    data: &dyn DtnOracle,
    q_ref: &Potential,
    cfg: &ReconstructionConfig,
    truth: Option<&Potential>,
) -> Result<Reconstruction> {
    let meter = DeltaMeter::new(cfg, scheme, q_ref)?;
    reconstruct_with(scheme, data, q_ref, cfg, &meter, truth)
}

/// Reconstruction from the exact lattice spectrum of `p`, bypassing the DtN.
pub fn exact_slice_reconstruction(p: &ScalarField, radius: f64) -> Result<(f64, f64)> {
    let grid = p.grid();
    let torus = Torus::new(grid);
    let mut omega0 = vec![0.0; grid.dim()];
    omega0[0] = 1.0;
    let mut freq = FrequencyGrid::new(&torus, radius, DataMode::Full, &omega0, 0.3)?;
    freq.fill_exact(&torus.spectrum(p)?);
    let inv = invert_cutoff(&torus, &freq, radius)?;
    Ok((torus_error(&torus, &inv.torus_values, p)?, tail_error(&torus, p, radius)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub level: f64,
    pub delta: f64,
    pub err: f64,
    pub rho: f64,
    pub radius: f64,
    pub trivial: bool,
    pub admissible_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilitySweep {
    pub records: Vec<StabilityRecord>,
    pub modulus: ModulusParams,
    pub constant: f64,
}

impl StabilitySweep {
    /// Errors do not grow as the distance shrinks, up to a relative tolerance.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let mut r: Vec<&StabilityRecord> = self.records.iter().collect();
        r.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        r.windows(2).all(|w| w[1].err <= (1.0 + tol) * w[0].err)
    }

    /// Smallest `C` with `err ≤ C·modulus(δ)` for another modulus.
    pub fn refit(&self, modulus: &ModulusParams) -> Result<f64> {
        let d: Vec<f64> = self.records.iter().map(|r| r.delta).collect();
        let e: Vec<f64> = self.records.iter().map(|r| r.err).collect();
        fit_modulus_constant(&d, &e, |x| modulus_extended(modulus, x))
    }
}

/// Perturbations `q = q̃ + λ_k p₀` with optional noise of weighted size `ν·λ_k`.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub reference: Potential,
    pub direction: Potential,
    pub levels: Vec<f64>,
    pub noise_ratio: f64,
    pub seed: u64,
}

/// Runs the pipeline at every level and fits the modulus constant.
pub fn stability_sweep(
    scheme: &Scheme,
    plan: &SweepPlan,
    cfg: &ReconstructionConfig,
    modulus: &ModulusParams,
) -> Result<StabilitySweep> {
    let levels = &plan.levels;
    if levels.len() < 5 {
        return Err(Error::Degenerate(format!("a sweep needs at least 5 levels, got {}", levels.len())));
    }
    let (lo, hi) = levels.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    if !(lo > 0.0) || hi / lo < 1e3 {
        return Err(Error::Degenerate(format!("levels must be positive and span three decades, got [{lo}, {hi}]")));
    }
    let grid = plan.reference.grid();
    grid.check_same(plan.direction.grid(), "reference and perturbation")?;
    let meter = DeltaMeter::new(cfg, scheme, &plan.reference)?;
    let mut records = Vec::with_capacity(levels.len());
    for (k, &level) in levels.iter().enumerate() {
        let values: Vec<f64> =
            plan.reference.values().iter().zip(plan.direction.values()).map(|(a, b)| a + level * b).collect();
        let q = Potential::from_values(grid, values)?;
        let clean = SimulatedDtn::new(*scheme, q.clone());
        let rec = if plan.noise_ratio > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(k as u64));
            let noise = noise_matrix(&meter.input, &meter.output, meter.exponents, plan.noise_ratio * level, &mut rng);
            let noisy = NoisyDtn { inner: &clean, input: meter.input.clone(), output: meter.output.clone(), noise };
            reconstruct_with(scheme, &noisy, &plan.reference, cfg, &meter, Some(&q))?
        } else {
            reconstruct_with(scheme, &clean, &plan.reference, cfg, &meter, Some(&q))?
        };
        log::debug!("level {level:.3e}: δ = {:.3e}, err = {:.3e}", rec.delta, rec.error.unwrap_or(f64::NAN));
        records.push(StabilityRecord {
            level,
            delta: rec.delta,
            err: rec.error.unwrap_or(0.0),
            rho: rec.params.rho,
            radius: rec.params.radius,
            trivial: rec.params.trivial,
            admissible_nodes: rec.slices.admissible_count(),
        });
    }
    let d: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let e: Vec<f64> = records.iter().map(|r| r.err).collect();
    let constant = fit_modulus_constant(&d, &e, |x| modulus_extended(modulus, x))?;
    Ok(StabilitySweep { records, modulus: *modulus, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_rules() {
        assert_eq!(choose_omega(&[0.0, 0.0], DataMode::Partial, &[1.0, 0.0], 0.1).unwrap(), vec![1.0, 0.0]);
        assert_eq!(choose_omega(&[1.0, 0.0], DataMode::Full, &[1.0, 0.0], 0.1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(choose_omega(&[1.0, 0.0], DataMode::Partial, &[0.0, 1.0], 0.1).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(choose_omega(&[1.0, 0.0], DataMode::Partial, &[1.0, 0.0], 0.3), Err(Error::Infeasible(_))));
        assert!(matches!(choose_omega(&[2.0], DataMode::Full, &[1.0], 0.3), Err(Error::Infeasible(_))));
        // 0.2 rad off the axis is inside a cap of radius 0.3
        let xi = [-(0.2f64).sin(), (0.2f64).cos()];
        let w = choose_omega(&xi, DataMode::Partial, &[1.0, 0.0], 0.3).unwrap();
        assert!(dot(&w, &xi).abs() < 1e-12 && ((w[0] - 1.0).powi(2) + w[1] * w[1]).sqrt() <= 0.3);
    }

    #[test]
    fn parameter_rule() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let mut cfg = ReconstructionConfig::full(1);
        cfg.s = 0.1;
        cfg.exponent_constant = Some(1.0);
        let p = select_parameters(&cfg, &g, (-8.0f64).exp());
        assert!((p.rho - 2.0).abs() < 1e-12 && (p.radius - 2f64.powf(0.1)).abs() < 1e-12);
        assert!(select_parameters(&cfg, &g, 0.2).trivial);
        cfg.rho = Some(5.0);
        assert!(!select_parameters(&cfg, &g, 0.2).trivial);
        cfg.rho = None;
        let sat = select_parameters(&cfg, &g, 0.0);
        assert!(sat.saturated && (sat.rho - rho_overflow(&g)).abs() < 1e-12);
        assert!((sat.radius.ln() / sat.rho.ln() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exact_slices_leave_only_the_tail() {
        let g = Grid::new(1, 33, 33, 1.0).unwrap();
        let p = ScalarField::from_real_fn(&g, |x, t| 0.3 * (PI * x[0]).sin() * (PI * t).sin());
        for r in [0.5, 4.0, 10.0] {
            let (err, tail) = exact_slice_reconstruction(&p, r).unwrap();
            assert!((err - tail).abs() < 1e-12, "R={r}: {err} vs {tail}");
        }
    }

    #[test]
    fn full_cutoff_is_a_round_trip() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let p = ScalarField::from_real_fn(&g, |x, t| x[0] * (1.0 - t) + 0.1);
        let torus = Torus::new(&g);
        let big = 1e6;
        let mut freq = FrequencyGrid::new(&torus, big, DataMode::Full, &[1.0], 0.3).unwrap();
        freq.fill_exact(&torus.spectrum(&p).unwrap());
        let inv = invert_cutoff(&torus, &freq, big).unwrap();
        for (a, b) in inv.estimate.values().iter().zip(p.values()) {
            assert!((a - b.re).abs() < 1e-10);
        }
        let zero = FrequencyGrid::new(&torus, 3.0, DataMode::Full, &[1.0], 0.3).unwrap();
        assert!(invert_cutoff(&torus, &zero, 3.0).unwrap().estimate.is_zero());
    }

    #[test]
    fn identical_potentials_give_zero_slices() {
        let g = Grid::new(1, 33, 65, 1.0).unwrap();
        let q = Potential::from_fn(&g, |x, t| 0.2 * x[0] * t).unwrap();
        let data = SimulatedDtn::new(Scheme::crank_nicolson(), q.clone());
        let v = fourier_slice(&Scheme::crank_nicolson(), &data, &q, &q, (&[0.0], PI), &[1.0], 4.0).unwrap();
        assert!(v.norm() < 1e-9, "{v}");
    }
}
