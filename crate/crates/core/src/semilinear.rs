//! Semilinear boundary map, its linearization, and recovery of the
//! nonlinearity from constant-level probing.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dtn::{assemble_dtn_matrix, Basis, DtnOracle, SimulatedDtn};
use crate::error::{Error, Result};
use crate::field::{BoundaryField, Potential, ScalarField};
use crate::forward::{neumann_trace, NewtonOptions, Scheme, SemilinearSolution};
use crate::grid::Grid;
use crate::norms::{modulus_extended, ModulusParams, SobolevExponents, Torus};
use crate::reconstruct::{invert_cutoff, reconstruct_with, DeltaMeter, FrequencyGrid, ReconstructionConfig};
use crate::stats::{fit_modulus_constant, loglog_slope};

type Eval = dyn Fn([f64; 2], f64, f64) -> [f64; 2] + Send + Sync;

/// `a(x,t,u)` together with `∂_u a`.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    depends_on_xt: bool,
    eval: Arc<Eval>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity").field("name", &self.name).finish()
    }
}

impl Nonlinearity {
    /// `eval(x, t, u)` must return `[a, ∂_u a]`.
    pub fn new(
        name: impl Into<String>,
        depends_on_xt: bool,
        eval: impl Fn([f64; 2], f64, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity { name: name.into(), depends_on_xt, eval: Arc::new(eval) }
    }

    pub fn zero() -> Self {
        Self::new("0", false, |_, _, _| [0.0, 0.0])
    }

    /// `a(u) = Σ c_k u^k`.
    pub fn polynomial(coeffs: &[f64]) -> Self {
        let c = coeffs.to_vec();
        let name = c
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| match k {
                0 => format!("{v}"),
                1 => format!("{v}u"),
                _ => format!("{v}u^{k}"),
            })
            .collect::<Vec<_>>()
            .join("+");
        Self::new(if name.is_empty() { "0".into() } else { name }, false, move |_, _, u| {
            let mut a = 0.0;
            let mut da = 0.0;
            for (k, ck) in c.iter().enumerate().rev() {
                a = a * u + ck;
                if k > 0 {
                    da = da * u + *ck * k as f64;
                }
            }
            [a, da]
        })
    }

    /// `a(u) = c·u`.
    pub fn linear(c: f64) -> Self {
        Self::polynomial(&[0.0, c])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// False when `a` depends on `u` only.
    pub fn depends_on_xt(&self) -> bool {
        self.depends_on_xt
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2], t: f64, u: f64) -> [f64; 2] {
        (self.eval)(x, t, u)
    }

    #[inline]
    pub fn value(&self, x: [f64; 2], t: f64, u: f64) -> f64 {
        (self.eval)(x, t, u)[0]
    }

    #[inline]
    pub fn slope(&self, x: [f64; 2], t: f64, u: f64) -> f64 {
        (self.eval)(x, t, u)[1]
    }

    /// Membership in the class `a(0) = 0`, `a′ ≥ 0`, sampled on `[−λ, λ]`.
    pub fn check_monotone_class(&self, lambda: f64, samples: usize) -> Result<()> {
        let origin = [0.0, 0.0];
        let a0 = self.value(origin, 0.0, 0.0);
        if a0.abs() > 1e-14 {
            return Err(Error::InvalidArgument(format!("nonlinearity {} has a(0) = {a0}", self.name)));
        }
        for i in 0..=samples {
            let u = -lambda + 2.0 * lambda * i as f64 / samples.max(1) as f64;
            let d = self.slope(origin, 0.0, u);
            if d < -1e-14 {
                return Err(Error::InvalidArgument(format!("nonlinearity {} decreases at u = {u} (a' = {d})", self.name)));
            }
        }
        Ok(())
    }
}

/// `u = g` on `Σ`, `u(·,0) = u0`, via the Newton-stepped θ-scheme.
pub fn semilinear_solve(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<SemilinearSolution> {
    scheme.solve_semilinear(g.grid(), a, g, u0, opts)
}

/// `N_a g = ∂_ν u_{a,g}`.
pub fn dtn_semilinear(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<BoundaryField> {
    neumann_trace(&semilinear_solve(scheme, a, g, u0, opts)?.field)
}

/// `∂_u a(x, t, u(x,t))` at every node.
pub fn potential_along(a: &Nonlinearity, u: &ScalarField) -> Result<Potential> {
    let grid = u.grid();
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.nt() {
        let t = grid.time(k);
        for s in 0..grid.nspace() {
            values.push(a.slope(grid.position(s), t, u.get(s, k).re));
        }
    }
    Potential::from_values(grid, values)
}

/// `p_{a,g} = ∂_u a(·, u_{a,g})`.
pub fn linearized_potential(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<Potential> {
    potential_along(a, &semilinear_solve(scheme, a, g, u0, opts)?.field)
}

/// `v ↦ p(x,t) v` with `p` read at the nearest node.
fn tangent(p: &Potential) -> Nonlinearity {
    let grid = p.grid().clone();
    let values = p.values().to_vec();
    Nonlinearity::new("tangent", true, move |x, t, v| {
        let i = (x[0] / grid.hx()).round() as usize;
        let j = if grid.dim() == 2 { (x[1] / grid.hx()).round() as usize } else { 0 };
        let k = (t / grid.ht()).round() as usize;
        let c = values[grid.index(grid.spatial_index(i, j), k)];
        [c * v, c]
    })
}

fn real_boundary(f: &BoundaryField, part: fn(Complex64) -> f64) -> Result<BoundaryField> {
    BoundaryField::from_values(f.grid(), f.values().iter().map(|v| Complex64::new(part(*v), 0.0)).collect())
}

/// Linearized semilinear map `h ↦ ∂_ν v` at a fixed base state, computed by
/// its own tangent solve (the Newton path with `a(x,t,v) = p_{a,g} v`).
pub struct FrechetDtn {
    pub scheme: Scheme,
    pub potential: Potential,
    pub opts: NewtonOptions,
    tangent: Nonlinearity,
}

impl FrechetDtn {
    pub fn new(
        scheme: &Scheme,
        a: &Nonlinearity,
        g: &BoundaryField,
        u0: Option<&[f64]>,
        opts: &NewtonOptions,
    ) -> Result<Self> {
        let potential = linearized_potential(scheme, a, g, u0, opts)?;
        Ok(FrechetDtn { scheme: *scheme, tangent: tangent(&potential), potential, opts: *opts })
    }

    fn apply_real(&self, h: &BoundaryField, h0: Option<Vec<f64>>) -> Result<BoundaryField> {
        let sol = semilinear_solve(&self.scheme, &self.tangent, h, h0.as_deref(), &self.opts)?;
        neumann_trace(&sol.field)
    }
}

impl DtnOracle for FrechetDtn {
    fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    fn apply(&self, h: &BoundaryField, h0: Option<&[Complex64]>) -> Result<BoundaryField> {
        let re = self.apply_real(&real_boundary(h, |v| v.re)?, h0.map(|v| v.iter().map(|z| z.re).collect()))?;
        let has_imag = h.values().iter().any(|v| v.im != 0.0) || h0.is_some_and(|v| v.iter().any(|z| z.im != 0.0));
        if !has_imag {
            return Ok(re);
        }
        let im = self.apply_real(&real_boundary(h, |v| v.im)?, h0.map(|v| v.iter().map(|z| z.im).collect()))?;
        re.axpy(Complex64::new(0.0, 1.0), &im)
    }
}

/// `N′_a(g) h` with initial perturbation `h0`.
pub fn frechet_dtn(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    h: &BoundaryField,
    h0: Option<&[Complex64]>,
    opts: &NewtonOptions,
) -> Result<BoundaryField> {
    FrechetDtn::new(scheme, a, g, u0, opts)?.apply(h, h0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdReport {
    pub eps: Vec<f64>,
    /// `‖(N_a(g+εh) − N_a(g))/ε − N′_a(g)h‖_{L²(Σ)}`.
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Finite-difference consistency of the linearization.
pub fn frechet_fd_check(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    h: &BoundaryField,
    eps: &[f64],
    opts: &NewtonOptions,
) -> Result<FdReport> {
    let base = dtn_semilinear(scheme, a, g, u0, opts)?;
    let lin = frechet_dtn(scheme, a, g, u0, h, None, opts)?;
    let errors = eps
        .iter()
        .map(|&e| {
            let shifted = dtn_semilinear(scheme, a, &g.axpy(Complex64::new(e, 0.0), h)?, u0, opts)?;
            let fd = shifted.sub(&base)?.scaled(Complex64::new(1.0 / e, 0.0));
            Ok(fd.sub(&lin)?.l2_norm())
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(eps, &errors)?;
    Ok(FdReport { eps: eps.to_vec(), errors, slope })
}

/// `max|u| ≤ c_λ`.
pub fn check_a_priori(u: &ScalarField, c_lambda: f64) -> Result<()> {
    let m = u.max_abs();
    if m > c_lambda {
        return Err(Error::APriori(format!("max|u| = {m:.6e} exceeds {c_lambda:.6e}")));
    }
    Ok(())
}

/// For `a(0) = 0`, `a′ ≥ 0`: `u(Q̄) ⊆ [−max g⁻, max g⁺]`, with `g` including initial values.
pub fn check_range(u: &ScalarField, g: &BoundaryField, u0: Option<&[f64]>, tol: f64) -> Result<()> {
    let data = g.values().iter().map(|v| v.re).chain(u0.unwrap_or(&[]).iter().copied());
    let (lo, hi) = data.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (umin, umax) = u.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v.re), b.max(v.re)));
    if umin < lo - tol || umax > hi + tol {
        return Err(Error::APriori(format!("solution range [{umin:.6e}, {umax:.6e}] leaves [{lo:.6e}, {hi:.6e}]")));
    }
    Ok(())
}

/// `g ≡ s` on `Σ` and `u(·,0) = s`.
pub fn constant_level_data(grid: &Grid, s: f64) -> (BoundaryField, Vec<f64>) {
    (BoundaryField::from_fn(grid, |_, _, _| Complex64::new(s, 0.0)), vec![s; grid.nspace()])
}

/// Pointwise sum `a + c·b`.
pub fn combine(a: &Nonlinearity, c: f64, b: &Nonlinearity) -> Nonlinearity {
    let (a2, b2) = (a.clone(), b.clone());
    Nonlinearity::new(
        format!("{}+{c}({})", a.name(), b.name()),
        a.depends_on_xt() || b.depends_on_xt(),
        move |x, t, u| {
            let [va, da] = a2.eval(x, t, u);
            let [vb, db] = b2.eval(x, t, u);
            [va + c * vb, da + c * db]
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub reconstruction: ReconstructionConfig,
    /// Time layers `0..=window` averaged when reading the estimate at `t = 0`.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Bound `λ` of the probed levels.
    pub lambda: f64,
}

fn default_window() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub level: f64,
    pub delta: f64,
    /// Recovered `â′(s) − ã′(s)`.
    pub slope_difference: f64,
    /// Largest change of the slope difference when the window is halved or doubled.
    pub window_sensitivity: f64,
    pub slope: f64,
    pub value: f64,
    pub true_slope: f64,
    pub true_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryTable {
    pub rows: Vec<RecoveryRow>,
    /// `max_i |â(s_i) − a(s_i)|`.
    pub sup_error: f64,
    pub max_delta: f64,
}

/// Weighted average of the first `window + 1` time layers.
fn window_average(f: &[f64], grid: &Grid, window: usize) -> f64 {
    let ns = grid.nspace();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..=window.min(grid.nt() - 1) {
        for s in 0..ns {
            let w = grid.space_weight(s);
            num += w * f[k * ns + s];
            den += w;
        }
    }
    num / den
}

/// Pipeline response to `χ_Q·(1 − e^{−at})(1 − e^{−a(T−t)})`, the constant
/// contrast seen through the principal parts of both probes.
fn constant_response(torus: &Torus, slices: &FrequencyGrid, rho: f64, window: usize) -> Result<f64> {
    let grid = torus.grid();
    let a = rho.powf(0.75);
    let t_final = grid.t_final();
    let m = ScalarField::from_real_fn(grid, |_, t| (1.0 - (-a * t).exp()) * (1.0 - (-a * (t_final - t)).exp()));
    let spec = torus.spectrum(&m)?;
    let mut freq = slices.clone();
    for node in &mut freq.nodes {
        node.value = if node.is_admissible() { spec[node.index] } else { Complex64::new(0.0, 0.0) };
    }
    let inv = invert_cutoff(torus, &freq, slices.radius)?;
    Ok(window_average(inv.estimate.values(), grid, window))
}

/// `∫_0^s d` for the piecewise-linear interpolant of `(s_i, d_i)`, constant beyond the ends.
fn integrate_from_zero(levels: &[f64], d: &[f64], s: f64) -> f64 {
    let interp = |x: f64| -> f64 {
        if x <= levels[0] {
            return d[0];
        }
        for i in 1..levels.len() {
            if x <= levels[i] {
                let w = (x - levels[i - 1]) / (levels[i] - levels[i - 1]);
                return d[i - 1] * (1.0 - w) + d[i] * w;
            }
        }
        d[levels.len() - 1]
    };
    // breakpoints between 0 and s
    let (lo, hi, sign) = if s >= 0.0 { (0.0, s, 1.0) } else { (s, 0.0, -1.0) };
    let mut pts = vec![lo];
    pts.extend(levels.iter().copied().filter(|&l| l > lo && l < hi));
    pts.push(hi);
    let total: f64 = pts.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (interp(w[0]) + interp(w[1]))).sum();
    sign * total
}

/// Recovers `a′ − ã′` at constant levels from the linearized boundary maps of
/// `a` (simulated data) and `ã` (known), then `â` by integration from `a(0) = 0`.
pub fn recover_nonlinearity(
    scheme: &Scheme,
    a: &Nonlinearity,
    reference: &Nonlinearity,
    levels: &[f64],
    grid: &Grid,
    cfg: &RecoveryConfig,
    opts: &NewtonOptions,
) -> Result<RecoveryTable> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no probing levels".into()));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(s) = sorted.iter().find(|s| s.abs() > cfg.lambda) {
        return Err(Error::InvalidArgument(format!("level {s} lies outside [−{0}, {0}]", cfg.lambda)));
    }
    let torus = Torus::new(grid);
    let origin = [0.0, 0.0];
    let mut rows = Vec::with_capacity(sorted.len());
    for &s in &sorted {
        let (g, u0) = constant_level_data(grid, s);
        let data = FrechetDtn::new(scheme, a, &g, Some(&u0), opts)?;
        let p_ref = linearized_potential(scheme, reference, &g, Some(&u0), opts)?;
        let meter = DeltaMeter::new(&cfg.reconstruction, scheme, &p_ref)?;
        let rec = reconstruct_with(scheme, &data, &p_ref, &cfg.reconstruction, &meter, Some(&data.potential))?;
        if rec.params.trivial {
            return Err(Error::Degenerate(format!(
                "level {s}: distance {:.3e} selects the trivial branch, nothing to recover",
                rec.delta
            )));
        }
        let est = rec.inversion.estimate.values();
        let read = |w: usize| -> Result<f64> {
            let kappa = constant_response(&torus, &rec.slices, rec.params.rho, w)?;
            if kappa.abs() < 1e-12 {
                return Err(Error::Degenerate("the averaging window sees no probe response".into()));
            }
            Ok(window_average(est, grid, w) / kappa)
        };
        let diff = read(cfg.window)?;
        let sensitivity = [cfg.window.div_ceil(2), 2 * cfg.window]
            .iter()
            .map(|&w| read(w).map(|v| (v - diff).abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rows.push(RecoveryRow {
            level: s,
            delta: rec.delta,
            slope_difference: diff,
            window_sensitivity: sensitivity,
            slope: reference.slope(origin, 0.0, s) + diff,
            value: 0.0,
            true_slope: a.slope(origin, 0.0, s),
            true_value: a.value(origin, 0.0, s),
        });
    }
    let d: Vec<f64> = rows.iter().map(|r| r.slope_difference).collect();
    for row in &mut rows {
        row.value = reference.value(origin, 0.0, row.level) + integrate_from_zero(&sorted, &d, row.level);
    }
    let sup_error = rows.iter().map(|r| (r.value - r.true_value).abs()).fold(0.0, f64::max);
    let max_delta = rows.iter().map(|r| r.delta).fold(0.0, f64::max);
    Ok(RecoveryTable { rows, sup_error, max_delta })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemilinearRecord {
    pub amplitude: f64,
    pub delta: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemilinearSweep {
    pub records: Vec<SemilinearRecord>,
    pub modulus: ModulusParams,
    pub constant: f64,
}

/// Recovery for `a = ã + λ_k b` with sup-norm errors against the truth.
#[allow(clippy::too_many_arguments)]
pub fn semilinear_stability_sweep(
    scheme: &Scheme,
    reference: &Nonlinearity,
    direction: &Nonlinearity,
    amplitudes: &[f64],
    levels: &[f64],
    grid: &Grid,
    cfg: &RecoveryConfig,
    opts: &NewtonOptions,
    modulus: &ModulusParams,
) -> Result<SemilinearSweep> {
    if amplitudes.len() < 2 {
        return Err(Error::Degenerate("a sweep needs at least two amplitudes".into()));
    }
    let records = amplitudes
        .iter()
        .map(|&lam| {
            let a = combine(reference, lam, direction);
            let table = recover_nonlinearity(scheme, &a, reference, levels, grid, cfg, opts)?;
            Ok(SemilinearRecord { amplitude: lam, delta: table.max_delta, err: table.sup_error })
        })
        .collect::<Result<Vec<_>>>()?;
    let d: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let e: Vec<f64> = records.iter().map(|r| r.err).collect();
    let constant = fit_modulus_constant(&d, &e, |x| modulus_extended(modulus, x))?;
    Ok(SemilinearSweep { records, modulus: *modulus, constant })
}

/// Largest gap between the tangent solve and the linear map with the extracted potential.
pub fn frechet_identity_gap(
    scheme: &Scheme,
    a: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    h: &BoundaryField,
    h0: Option<&[Complex64]>,
    opts: &NewtonOptions,
) -> Result<(f64, f64)> {
    let oracle = FrechetDtn::new(scheme, a, g, u0, opts)?;
    let direct = oracle.apply(h, h0)?;
    let linear = SimulatedDtn::new(*scheme, oracle.potential.clone()).apply(h, h0)?;
    Ok((direct.sub(&linear)?.max_abs(), linear.max_abs()))
}

/// Weighted distance between the linearized maps of two nonlinearities at one state.
pub fn linearized_distance(
    scheme: &Scheme,
    a: &Nonlinearity,
    reference: &Nonlinearity,
    g: &BoundaryField,
    u0: Option<&[f64]>,
    basis: &Basis,
    opts: &NewtonOptions,
) -> Result<f64> {
    let exps = SobolevExponents::dtn_difference();
    let da = FrechetDtn::new(scheme, a, g, u0, opts)?;
    let dr = FrechetDtn::new(scheme, reference, g, u0, opts)?;
    let ma = assemble_dtn_matrix(&da, basis, basis, None, exps)?;
    let mr = assemble_dtn_matrix(&dr, basis, basis, None, exps)?;
    Ok(ma.difference(&mr)?.operator_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_value_and_slope() {
        let a = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.1]);
        let [v, d] = a.eval([0.0; 2], 0.0, 2.0);
        assert!((v - 2.8).abs() < 1e-14);
        assert!((d - 2.2).abs() < 1e-14);
        assert!(a.check_monotone_class(1.0, 20).is_ok());
        assert!(Nonlinearity::linear(-1.0).check_monotone_class(1.0, 4).is_err());
        assert!(Nonlinearity::polynomial(&[1.0]).check_monotone_class(1.0, 4).is_err());
    }

    fn setup(n: usize, nx: usize, nt: usize) -> Grid {
        Grid::new(n, nx, nt, 1.0).unwrap()
    }

    fn smooth_h(grid: &Grid) -> BoundaryField {
        BoundaryField::from_fn(grid, |node, _, t| {
            Complex64::new((std::f64::consts::PI * t).sin().powi(2) * (1.0 + 0.5 * node.face as f64), 0.0)
        })
    }

    #[test]
    fn zero_nonlinearity_matches_heat_map() {
        let g = setup(1, 33, 65);
        let data = smooth_h(&g);
        let sch = Scheme::crank_nicolson();
        let opts = NewtonOptions::default();
        let nl = dtn_semilinear(&sch, &Nonlinearity::zero(), &data, None, &opts).unwrap();
        let lin = crate::dtn::dtn_apply(&sch, &Potential::zero(&g), &data, None).unwrap();
        assert!(nl.sub(&lin).unwrap().max_abs() < 1e-9);
        let zero = dtn_semilinear(&sch, &Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.2]), &BoundaryField::zeros(&g), None, &opts)
            .unwrap();
        assert!(zero.max_abs() < 1e-14);
    }

    #[test]
    fn spatially_constant_solution_has_zero_flux() {
        let g = setup(1, 33, 257);
        let data = BoundaryField::from_fn(&g, |_, _, t| Complex64::new((-t).exp(), 0.0));
        let u0 = vec![1.0; g.nspace()];
        let out = dtn_semilinear(&Scheme::crank_nicolson(), &Nonlinearity::linear(1.0), &data, Some(&u0), &NewtonOptions::default())
            .unwrap();
        assert!(out.max_abs() < 1e-4, "{}", out.max_abs());
    }

    #[test]
    fn linearized_potential_identities() {
        let g = setup(1, 17, 33);
        let sch = Scheme::crank_nicolson();
        let opts = NewtonOptions::default();
        let (data, u0) = constant_level_data(&g, 0.4);
        let p = linearized_potential(&sch, &Nonlinearity::linear(1.0), &data, Some(&u0), &opts).unwrap();
        assert!(p.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let sq = Nonlinearity::polynomial(&[0.0, 0.0, 1.0]);
        let sol = semilinear_solve(&sch, &sq, &data, Some(&u0), &opts).unwrap();
        let p = potential_along(&sq, &sol.field).unwrap();
        for (pv, uv) in p.values().iter().zip(sol.field.values()) {
            assert!((pv - 2.0 * uv.re).abs() < 1e-14);
        }
        let cubic = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.1]);
        let p = linearized_potential(&sch, &cubic, &data, Some(&u0), &opts).unwrap();
        assert!(p.slice(0).iter().all(|v| (v - (1.0 + 0.3 * 0.16)).abs() < 1e-14));
    }

    #[test]
    fn tangent_path_matches_linear_map() {
        let g = setup(2, 13, 17);
        let sch = Scheme::crank_nicolson();
        let opts = NewtonOptions { tolerance: 1e-13, ..NewtonOptions::default() };
        let a = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.1]);
        let (data, u0) = constant_level_data(&g, 0.5);
        let h = smooth_h(&g).scaled(Complex64::new(1.0, -0.5));
        let (gap, scale) = frechet_identity_gap(&sch, &a, &data, Some(&u0), &h, None, &opts).unwrap();
        assert!(gap < 1e-9 * scale.max(1.0), "{gap} vs {scale}");
        let zero = frechet_dtn(&sch, &a, &data, Some(&u0), &BoundaryField::zeros(&g), None, &opts).unwrap();
        assert!(zero.max_abs() < 1e-12);
    }

    #[test]
    fn finite_differences_converge_at_first_order() {
        let g = setup(1, 33, 65);
        let sch = Scheme::crank_nicolson();
        let opts = NewtonOptions { tolerance: 1e-14, ..NewtonOptions::default() };
        let a = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.5]);
        let base = smooth_h(&g).scaled(Complex64::new(0.8, 0.0));
        let h = BoundaryField::from_fn(&g, |node, _, t| Complex64::new(t * t * (1.0 - 2.0 * node.face as f64), 0.0));
        let r = frechet_fd_check(&sch, &a, &base, None, &h, &[1e-2, 1e-3, 1e-4, 1e-5], &opts).unwrap();
        assert!(r.slope >= 0.9, "{:?}", r);
    }

    #[test]
    fn range_and_bound_checks() {
        let g = setup(1, 17, 33);
        let sch = Scheme::crank_nicolson();
        let a = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.1]);
        let (data, u0) = constant_level_data(&g, 0.7);
        let sol = semilinear_solve(&sch, &a, &data, Some(&u0), &NewtonOptions::default()).unwrap();
        check_range(&sol.field, &data, Some(&u0), 1e-10).unwrap();
        check_a_priori(&sol.field, 0.7 + 1e-12).unwrap();
        assert!(check_a_priori(&sol.field, 0.5).is_err());
    }

    #[test]
    fn piecewise_linear_integration() {
        let lv = [-0.5, 0.0, 0.5];
        let d = [0.5, 0.5, 0.5];
        assert!((integrate_from_zero(&lv, &d, 0.5) - 0.25).abs() < 1e-15);
        assert!((integrate_from_zero(&lv, &d, -0.5) + 0.25).abs() < 1e-15);
        let d2 = [1.0, 0.0, 1.0];
        assert!((integrate_from_zero(&lv, &d2, 0.5) - 0.25).abs() < 1e-15);
    }
}
