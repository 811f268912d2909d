//! Complex geometrical optics probes `u_± = ψ_∓ (θ_± + w_±)`.
//!
//! `ψ_ε = e^{−ε(ρω·x + ρ²t)}` and `φ_ε = ψ_ε²`. Conjugation turns the heat
//! operator into a drift operator:
//! `ψ_+ (∂_t − Δ)(ψ_− v) = (∂_t − Δ − 2ρω·∇) v` and
//! `ψ_− (−∂_t − Δ)(ψ_+ v) = (−∂_t − Δ + 2ρω·∇) v`.
//! Consequently `(−ε∂_t − Δ) ψ_ε = 0`. Remainders are computed in the
//! conjugated variable; `ψ` is applied only when a physical field is asked for.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryField, Potential, ScalarField};
use crate::forward::{LinearProblem, Scheme};
use crate::grid::{check_unit, DirectionMask, Grid, Sign};
use crate::stats::{fit_envelope, loglog_slope};

/// Largest exponent accepted when evaluating `ψ` or `φ` directly.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Parameters `(ε, ω, ξ, τ, ρ)` of one probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgoParams {
    pub sign: Sign,
    pub omega: Vec<f64>,
    pub xi: Vec<f64>,
    pub tau: f64,
    pub rho: f64,
}

impl CgoParams {
    pub fn new(sign: Sign, omega: Vec<f64>, xi: Vec<f64>, tau: f64, rho: f64) -> Self {
        CgoParams { sign, omega, xi, tau, rho }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_unit(grid, &self.omega)?;
        if self.xi.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!("ξ has {} components, expected {}", self.xi.len(), grid.dim())));
        }
        let dot: f64 = self.omega.iter().zip(&self.xi).map(|(a, b)| a * b).sum();
        if dot.abs() > 1e-12 * (1.0 + norm(&self.xi)) {
            return Err(Error::InvalidArgument(format!("ξ·ω = {dot:.3e} must vanish")));
        }
        if !(self.rho > 2.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("ρ must exceed 2, got {}", self.rho)));
        }
        Ok(())
    }

    /// `⟨ζ⟩² = 1 + |ξ|² + τ²`.
    pub fn zeta_bracket_sq(&self) -> f64 {
        1.0 + self.xi.iter().map(|v| v * v).sum::<f64>() + self.tau * self.tau
    }

    /// Damping rate `ρ^{3/4}` of the principal part.
    pub fn damping(&self) -> f64 {
        self.rho.powf(0.75)
    }

    fn omega2(&self) -> [f64; 2] {
        [self.omega[0], self.omega.get(1).copied().unwrap_or(0.0)]
    }

    fn xi2(&self) -> [f64; 2] {
        [self.xi[0], self.xi.get(1).copied().unwrap_or(0.0)]
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `ln ψ_ε(x,t) = −ε(ρω·x + ρ²t)`.
#[inline]
pub fn log_psi(sign: Sign, omega: &[f64], rho: f64, x: [f64; 2], t: f64) -> f64 {
    let dot: f64 = omega.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    -sign.value() * (rho * dot + rho * rho * t)
}

pub fn weight_psi(sign: Sign, omega: &[f64], rho: f64, x: [f64; 2], t: f64) -> Result<f64> {
    let e = log_psi(sign, omega, rho, x, t);
    if e.abs() > EXPONENT_LIMIT {
        return Err(Error::Overflow(e));
    }
    Ok(e.exp())
}

pub fn weight_phi(sign: Sign, omega: &[f64], rho: f64, x: [f64; 2], t: f64) -> Result<f64> {
    let e = 2.0 * log_psi(sign, omega, rho, x, t);
    if e.abs() > EXPONENT_LIMIT {
        return Err(Error::Overflow(e));
    }
    Ok(e.exp())
}

/// `ρ²T + ρ·sup|x|`, the largest weight exponent met on `Q̄`.
pub fn weight_exponent(grid: &Grid, rho: f64) -> f64 {
    rho * rho * grid.t_final() + rho * grid.radius()
}

/// Largest `ρ` whose weights stay below the exponent limit.
pub fn rho_overflow(grid: &Grid) -> f64 {
    let (t, r) = (grid.t_final(), grid.radius());
    (-r + (r * r + 4.0 * t * EXPONENT_LIMIT).sqrt()) / (2.0 * t)
}

pub fn check_overflow(grid: &Grid, rho: f64) -> Result<()> {
    let e = weight_exponent(grid, rho);
    if e > EXPONENT_LIMIT {
        Err(Error::Overflow(e))
    } else {
        Ok(())
    }
}

/// `θ_+ = (1 − e^{−ρ^{3/4}t}) e^{−i(ξ·x + τt)}` or `θ_− = 1 − e^{−ρ^{3/4}(T−t)}`.
pub fn principal_theta(params: &CgoParams, grid: &Grid) -> ScalarField {
    let a = params.damping();
    let xi = params.xi2();
    let t_final = grid.t_final();
    match params.sign {
        Sign::Plus => ScalarField::from_fn(grid, |x, t| {
            let phase = -(xi[0] * x[0] + xi[1] * x[1] + params.tau * t);
            Complex64::from_polar(1.0 - (-a * t).exp(), phase)
        }),
        Sign::Minus => ScalarField::from_real_fn(grid, |_, t| 1.0 - (-a * (t_final - t)).exp()),
    }
}

/// Right side of the conjugated corrector equation, `−(P + q)θ` evaluated exactly:
/// `S_+ = −e^{−iζ·(x,t)}[(−iτ + |ξ|² + q)(1 − e^{−at}) + a e^{−at}]`,
/// `S_− = −[a e^{−a(T−t)} + q(1 − e^{−a(T−t)})]`, `a = ρ^{3/4}`.
pub fn cgo_source(params: &CgoParams, q: &Potential) -> ScalarField {
    let grid = q.grid();
    let a = params.damping();
    let xi = params.xi2();
    let xi_sq = xi[0] * xi[0] + xi[1] * xi[1];
    let t_final = grid.t_final();
    let ns = grid.nspace();
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.nt() {
        let t = grid.time(k);
        for s in 0..ns {
            let qv = q.get(s, k);
            let v = match params.sign {
                Sign::Plus => {
                    let x = grid.position(s);
                    let damp = (-a * t).exp();
                    let e = Complex64::from_polar(1.0, -(xi[0] * x[0] + xi[1] * x[1] + params.tau * t));
                    -e * (Complex64::new(xi_sq + qv, -params.tau) * (1.0 - damp) + a * damp)
                }
                Sign::Minus => {
                    let damp = (-a * (t_final - t)).exp();
                    Complex64::new(-(a * damp + qv * (1.0 - damp)), 0.0)
                }
            };
            out.push(v);
        }
    }
    ScalarField::from_values(grid, out).expect("finite source")
}

/// A probe with its principal part and remainder kept separate.
#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub params: CgoParams,
    pub theta: ScalarField,
    pub remainder: ScalarField,
    /// `L²` norm of the finite-difference residual of the conjugated equation,
    /// i.e. of `ψ_± (ε∂_t − Δ + q) u_±`.
    pub residual_norm: f64,
}

impl CgoSolution {
    /// `θ + w`.
    pub fn conjugated(&self) -> ScalarField {
        self.theta.axpy(Complex64::new(1.0, 0.0), &self.remainder).expect("same grid")
    }

    fn log_weight(&self, grid: &Grid, s: usize, k: usize) -> f64 {
        log_psi(self.params.sign.flip(), &self.params.omega, self.params.rho, grid.position(s), grid.time(k))
    }

    /// `u = ψ_∓(θ + w)`; fails when the weight would overflow.
    pub fn field(&self) -> Result<ScalarField> {
        let grid = self.theta.grid();
        let v = self.conjugated();
        let mut out = Vec::with_capacity(grid.len());
        for k in 0..grid.nt() {
            for s in 0..grid.nspace() {
                let e = self.log_weight(grid, s, k);
                if e > EXPONENT_LIMIT {
                    return Err(Error::Overflow(e));
                }
                out.push(v.get(s, k) * e.exp());
            }
        }
        Ok(ScalarField::from_raw(grid, out))
    }

    /// Dirichlet trace of `u` on `Σ`.
    pub fn boundary_trace(&self) -> Result<BoundaryField> {
        let grid = self.theta.grid();
        let v = self.conjugated();
        let mut out = Vec::with_capacity(grid.boundary_len() * grid.nt());
        for k in 0..grid.nt() {
            for node in grid.boundary_nodes() {
                let e = self.log_weight(grid, node.spatial, k);
                if e > EXPONENT_LIMIT {
                    return Err(Error::Overflow(e));
                }
                out.push(v.get(node.spatial, k) * e.exp());
            }
        }
        BoundaryField::from_values(grid, out)
    }
}

/// Solves for the remainder with Dirichlet data `−θ` on `vanish` (one-cell
/// cosine taper) and 0 on the rest of `Σ`, zero data on `Ω_ε`.
pub fn build_cgo(scheme: &Scheme, params: &CgoParams, q: &Potential, vanish: Option<&DirectionMask>) -> Result<CgoSolution> {
    let grid = q.grid();
    params.validate(grid)?;
    let theta = principal_theta(params, grid);
    let source = cgo_source(params, q);
    let taper = vanish.map(|m| m.taper(grid));
    let dirichlet = match &taper {
        Some(w) => BoundaryField::from_values(
            grid,
            (0..grid.nt())
                .flat_map(|k| {
                    let theta = &theta;
                    grid.boundary_nodes()
                        .iter()
                        .enumerate()
                        .map(move |(b, node)| -theta.get(node.spatial, k) * w[b])
                })
                .collect(),
        )?,
        None => BoundaryField::zeros(grid),
    };
    let om = params.omega2();
    let eps = params.sign.value();
    // (ε∂_t − Δ − 2ερω·∇ + q) w = S
    let drift = [-2.0 * eps * params.rho * om[0], -2.0 * eps * params.rho * om[1]];
    let problem = LinearProblem {
        coefficient: (!q.is_zero()).then(|| q.values()),
        drift,
        dirichlet: &dirichlet,
        initial: None,
        source: Some(&source),
    };
    let remainder = match params.sign {
        Sign::Plus => scheme.solve(grid, &problem)?,
        Sign::Minus => scheme.solve_reversed(grid, &problem)?,
    };
    let mut sol = CgoSolution { params: params.clone(), theta, remainder, residual_norm: 0.0 };
    sol.residual_norm = conjugated_residual(&sol, q).l2_norm();
    Ok(sol)
}

/// `(ε D_t − Δ_h − 2ερω·∇_h + q)(θ + w)` with centred differences at interior
/// nodes and interior times; zero elsewhere.
fn conjugated_residual(sol: &CgoSolution, q: &Potential) -> ScalarField {
    let grid = q.grid();
    let v = sol.conjugated();
    let p = &sol.params;
    let eps = p.sign.value();
    let om = p.omega2();
    let (h, ht) = (grid.hx(), grid.ht());
    let strides = [1, grid.nx()];
    let interior = grid.interior();
    let mut r = ScalarField::zeros(grid);
    for k in 1..grid.nt() - 1 {
        for &s in &interior {
            let dt = (v.get(s, k + 1) - v.get(s, k - 1)) / (2.0 * ht);
            let mut acc = dt * eps + v.get(s, k) * q.get(s, k);
            for a in 0..grid.dim() {
                let (up, um) = (v.get(s + strides[a], k), v.get(s - strides[a], k));
                acc -= (up + um - v.get(s, k) * 2.0) / (h * h);
                acc -= (up - um) / (2.0 * h) * (2.0 * eps * p.rho * om[a]);
            }
            r.set(s, k, acc);
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub rho: Vec<f64>,
    pub remainder_norm: Vec<f64>,
    pub slope: f64,
}

/// `‖w‖_{L²(Q)}` over a `ρ` sweep at fixed `ζ`, with the log-log slope.
pub fn remainder_decay_report(
    scheme: &Scheme,
    base: &CgoParams,
    rhos: &[f64],
    q: &Potential,
    vanish: Option<&DirectionMask>,
) -> Result<DecayReport> {
    if rhos.len() < 4 {
        return Err(Error::Degenerate(format!("decay fit needs >= 4 values of ρ, got {}", rhos.len())));
    }
    let norms: Vec<f64> = rhos
        .par_iter()
        .map(|&rho| {
            let params = CgoParams { rho, ..base.clone() };
            build_cgo(scheme, &params, q, vanish).map(|s| s.remainder.l2_norm())
        })
        .collect::<Result<_>>()?;
    let slope = loglog_slope(rhos, &norms)?;
    Ok(DecayReport { rho: rhos.to_vec(), remainder_norm: norms, slope })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub a: f64,
    pub b: f64,
    pub rho: Vec<f64>,
    pub zeta_sq: Vec<f64>,
    pub remainder_norm: Vec<f64>,
}

/// Fits `‖w_+‖ ≈ Aρ^{−1/4} + Bρ^{−1}⟨ζ⟩²` over a grid of `ρ` and `τ` (with `ξ` fixed).
pub fn remainder_envelope(
    scheme: &Scheme,
    base: &CgoParams,
    rhos: &[f64],
    taus: &[f64],
    q: &Potential,
) -> Result<EnvelopeFit> {
    let jobs: Vec<(f64, f64)> = rhos.iter().flat_map(|&r| taus.iter().map(move |&t| (r, t))).collect();
    let rows: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(rho, tau)| {
            let params = CgoParams { rho, tau, ..base.clone() };
            let sol = build_cgo(scheme, &params, q, None)?;
            Ok((rho, params.zeta_bracket_sq() - 1.0, sol.remainder.l2_norm()))
        })
        .collect::<Result<_>>()?;
    let rho: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let zeta_sq: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let [a, b] = fit_envelope(&rho, &zeta_sq, &y)?;
    Ok(EnvelopeFit { a, b, rho, zeta_sq, remainder_norm: y })
}
