//! Numerical checks of the parabolic Carleman inequality and of the
//! Poincaré-type bound for the first-order part of the conjugated operator.
//!
//! Samples are given in the conjugated variable `v`, with the physical field
//! `u = ψ_{−ε} v`. Then `φ_ε|u|² = |v|²`, `φ_ε|∂_ν u|² = |∂_ν v|²` on `Σ`
//! (because `v = 0` there) and `ψ_ε(ε∂_t − Δ)u = P_ε v` with
//! `P_ε = ε∂_t − Δ − 2ερω·∇`, so no exponential weight is ever formed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Potential, ScalarField};
use crate::forward::neumann_trace;
use crate::grid::{check_unit, Grid, Sign};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// `ε∂_t − Δ − 2ερω·∇`
    P,
    /// `ε∂_t − 2ερω·∇`
    Q,
}

/// Second-order derivative estimates along one axis of a strided line.
fn first_derivative(line: &[Complex64], h: f64, out: &mut [Complex64]) {
    let n = line.len();
    for i in 1..n - 1 {
        out[i] = (line[i + 1] - line[i - 1]) / (2.0 * h);
    }
    out[0] = (line[0] * -3.0 + line[1] * 4.0 - line[2]) / (2.0 * h);
    out[n - 1] = (line[n - 1] * 3.0 - line[n - 2] * 4.0 + line[n - 3]) / (2.0 * h);
}

fn second_derivative(line: &[Complex64], h: f64, out: &mut [Complex64]) {
    let n = line.len();
    let h2 = h * h;
    for i in 1..n - 1 {
        out[i] = (line[i + 1] + line[i - 1] - line[i] * 2.0) / h2;
    }
    out[0] = (line[0] * 2.0 - line[1] * 5.0 + line[2] * 4.0 - line[3]) / h2;
    out[n - 1] = (line[n - 1] * 2.0 - line[n - 2] * 5.0 + line[n - 3] * 4.0 - line[n - 4]) / h2;
}

/// Applies `f` to every line of the field along `axis` (0, 1 spatial; 2 time).
fn along_axis(v: &ScalarField, axis: usize, h: f64, f: fn(&[Complex64], f64, &mut [Complex64])) -> ScalarField {
    let g = v.grid();
    let (nx, ns) = (g.nx(), g.nspace());
    let (stride, count) = match axis {
        0 => (1, nx),
        1 => (nx, nx),
        _ => (ns, g.nt()),
    };
    let mut out = ScalarField::zeros(g);
    let mut line = vec![Complex64::new(0.0, 0.0); count];
    let mut res = line.clone();
    let starts: Vec<usize> = (0..g.len()).filter(|&i| (i / stride) % count == 0).collect();
    for base in starts {
        for m in 0..count {
            line[m] = v.values()[base + m * stride];
        }
        f(&line, h, &mut res);
        for m in 0..count {
            out.values_mut()[base + m * stride] = res[m];
        }
    }
    out
}

/// Discrete `P_ε v` or `Q_ε v`.
pub fn conjugated_apply_signed(kind: OperatorKind, v: &ScalarField, omega: &[f64], rho: f64, sign: Sign) -> Result<ScalarField> {
    let g = v.grid();
    check_unit(g, omega)?;
    if g.nx() < 4 || g.nt() < 3 {
        return Err(Error::InvalidGrid("difference stencils need nx >= 4".into()));
    }
    let eps = sign.value();
    let dt = along_axis(v, 2, g.ht(), first_derivative);
    let mut out = dt.scaled(Complex64::new(eps, 0.0));
    for (a, &w) in omega.iter().enumerate() {
        let grad = along_axis(v, a, g.hx(), first_derivative);
        out = out.axpy(Complex64::new(-2.0 * eps * rho * w, 0.0), &grad)?;
        if kind == OperatorKind::P {
            let lap = along_axis(v, a, g.hx(), second_derivative);
            out = out.axpy(Complex64::new(-1.0, 0.0), &lap)?;
        }
    }
    Ok(out)
}

/// `P v = ∂_t v − Δv − 2ρω·∇v` or `Q v = ∂_t v − 2ρω·∇v`.
pub fn conjugated_apply(kind: OperatorKind, v: &ScalarField, omega: &[f64], rho: f64) -> Result<ScalarField> {
    conjugated_apply_signed(kind, v, omega, rho, Sign::Plus)
}

/// Rejects samples that are zero or do not vanish on `Σ ∪ Ω_ε`.
pub fn check_admissible(v: &ScalarField, sign: Sign) -> Result<()> {
    let g = v.grid();
    let scale = v.max_abs();
    if scale == 0.0 {
        return Err(Error::Degenerate("trivial sample".into()));
    }
    let tol = 1e-12 * scale;
    for k in 0..g.nt() {
        for node in g.boundary_nodes() {
            if v.get(node.spatial, k).norm() > tol {
                return Err(Error::BoundaryCondition(format!("sample is nonzero on Σ at node {} step {k}", node.spatial)));
            }
        }
    }
    let k0 = match sign {
        Sign::Plus => 0,
        Sign::Minus => g.nt() - 1,
    };
    if v.slice(k0).iter().any(|x| x.norm() > tol) {
        return Err(Error::BoundaryCondition(format!("sample is nonzero on the time slice {k0}")));
    }
    Ok(())
}

/// `ρ‖v‖ / ‖Q_ε v‖`.
pub fn poincare_ratio(v: &ScalarField, omega: &[f64], rho: f64, sign: Sign) -> Result<f64> {
    if !(rho > 2.0) {
        return Err(Error::InvalidArgument(format!("ρ must exceed 2, got {rho}")));
    }
    check_admissible(v, sign)?;
    let qv = conjugated_apply_signed(OperatorKind::Q, v, omega, rho, sign)?;
    let den = qv.l2_norm();
    if den == 0.0 {
        return Err(Error::Degenerate("Q v vanishes for a nontrivial sample".into()));
    }
    Ok(rho * v.l2_norm() / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CarlemanTerms {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Both sides of the weighted inequality for `u = ψ_{−ε} v`.
pub fn carleman_terms(v: &ScalarField, q: &Potential, omega: &[f64], rho: f64, sign: Sign) -> Result<CarlemanTerms> {
    let g = v.grid();
    g.check_same(q.grid(), "sample and potential")?;
    check_admissible(v, sign)?;
    let pv = conjugated_apply_signed(OperatorKind::P, v, omega, rho, sign)?;
    let pvq = pv.axpy(Complex64::new(1.0, 0.0), &v.mul(&q.to_field())?)?;
    let dn = neumann_trace(v)?;
    let eps = sign.value();
    let (mut outflow, mut inflow) = (0.0, 0.0);
    for k in 0..g.nt() {
        let tw = g.time_weight(k);
        for (b, node) in g.boundary_nodes().iter().enumerate() {
            let nu = g.normal(b);
            let dot: f64 = omega.iter().zip(nu.iter()).map(|(a, b)| a * b).sum();
            let term = dn.get(b, k).norm_sqr() * dot.abs() * node.weight * tw;
            if eps * dot > 0.0 {
                outflow += term;
            } else if eps * dot < 0.0 {
                inflow += term;
            }
        }
    }
    let k_end = match sign {
        Sign::Plus => g.nt() - 1,
        Sign::Minus => 0,
    };
    let end_slice: f64 = v.slice(k_end).iter().enumerate().map(|(s, x)| x.norm_sqr() * g.space_weight(s)).sum();
    let l2 = v.l2_norm();
    let lhs = end_slice + rho * outflow + rho * rho * l2 * l2;
    let rhs = pvq.l2_norm().powi(2) + rho * inflow;
    if !(rhs > 0.0) {
        return Err(Error::Degenerate("right side vanishes for a nontrivial sample".into()));
    }
    Ok(CarlemanTerms { lhs, rhs, ratio: lhs / rhs })
}

pub fn carleman_ratio(v: &ScalarField, q: &Potential, omega: &[f64], rho: f64, sign: Sign) -> Result<f64> {
    Ok(carleman_terms(v, q, omega, rho, sign)?.ratio)
}

/// `(−2 Re(Δv, ∂_t v), ∫_{Ω_−} |∇v|²)` for a sample vanishing on `Σ ∪ Ω_+`.
pub fn energy_identity(v: &ScalarField) -> Result<(f64, f64)> {
    check_admissible(v, Sign::Plus)?;
    let g = v.grid();
    let dt = along_axis(v, 2, g.ht(), first_derivative);
    let mut cross = 0.0;
    let mut grad_end = 0.0;
    let last = g.nt() - 1;
    for a in 0..g.dim() {
        let lap = along_axis(v, a, g.hx(), second_derivative);
        let conj_dt = dt.map(|z| z.conj());
        cross += -2.0 * lap.integrate_product(&conj_dt)?.re;
        let grad = along_axis(v, a, g.hx(), first_derivative);
        grad_end += grad.slice(last).iter().enumerate().map(|(s, z)| z.norm_sqr() * g.space_weight(s)).sum::<f64>();
    }
    Ok((cross, grad_end))
}

/// Seeded admissible samples for `Σ ∪ Ω_ε`: sine tensor products times a
/// time polynomial, and random smooth bumps with interior support.
pub fn carleman_samples(grid: &Grid, sign: Sign, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_final = grid.t_final();
    let n = grid.dim();
    (0..count)
        .map(|i| {
            let c: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let time = move |t: f64| {
                let s = match sign {
                    Sign::Plus => t / t_final,
                    Sign::Minus => 1.0 - t / t_final,
                };
                s * (1.0 + 0.5 * c[0] * s + 0.3 * c[1] * s * s)
            };
            if i % 2 == 0 {
                let k: [f64; 2] = [rng.gen_range(1..4) as f64, rng.gen_range(1..4) as f64];
                let ph = c[2];
                ScalarField::from_real_fn(grid, move |x, t| {
                    let sx = (k[0] * PI * x[0]).sin() * (1.0 + 0.3 * ph * x[0]);
                    let sy = if n == 2 { (k[1] * PI * x[1]).sin() } else { 1.0 };
                    sx * sy * time(t)
                })
            } else {
                let centre: [f64; 2] = [rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65)];
                let width = rng.gen_range(0.2..0.3);
                ScalarField::from_real_fn(grid, move |x, t| {
                    let mut r2 = ((x[0] - centre[0]) / width).powi(2);
                    if n == 2 {
                        r2 += ((x[1] - centre[1]) / width).powi(2);
                    }
                    let bump = if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 };
                    bump * time(t)
                })
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlemanRow {
    pub sample_id: usize,
    pub rho: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub poincare: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlemanReport {
    pub sign: Sign,
    pub rho: Vec<f64>,
    pub rows: Vec<CarlemanRow>,
}

impl CarlemanReport {
    /// Largest ratio at one value of `ρ`.
    pub fn max_ratio_at(&self, rho: f64) -> f64 {
        self.rows.iter().filter(|r| r.rho == rho).map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn max_poincare(&self) -> f64 {
        self.rows.iter().map(|r| r.poincare).fold(0.0, f64::max)
    }
}

/// Evaluates both inequalities for every sample and every `ρ`.
pub fn carleman_sweep(samples: &[ScalarField], q: &Potential, omega: &[f64], rhos: &[f64], sign: Sign) -> Result<CarlemanReport> {
    let jobs: Vec<(usize, f64)> = (0..samples.len()).flat_map(|i| rhos.iter().map(move |&r| (i, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, rho)| {
            let t = carleman_terms(&samples[i], q, omega, rho, sign)?;
            let p = poincare_ratio(&samples[i], omega, rho, sign)?;
            Ok(CarlemanRow { sample_id: i, rho, lhs: t.lhs, rhs: t.rhs, ratio: t.ratio, poincare: p })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CarlemanReport { sign, rho: rhos.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operators_on_polynomials() {
        let g = Grid::new(1, 9, 5, 1.0).unwrap();
        let c = ScalarField::from_real_fn(&g, |_, _| 2.5);
        assert!(conjugated_apply(OperatorKind::Q, &c, &[1.0], 7.0).unwrap().max_abs() < 1e-12);
        let x = ScalarField::from_real_fn(&g, |x, _| x[0]);
        let qx = conjugated_apply(OperatorKind::Q, &x, &[1.0], 3.0).unwrap();
        assert!(qx.values().iter().all(|v| (v - Complex64::new(-6.0, 0.0)).norm() < 1e-11));
        let x2 = ScalarField::from_real_fn(&g, |x, _| x[0] * x[0]);
        let px = conjugated_apply(OperatorKind::P, &x2, &[1.0], 3.0).unwrap();
        for s in 0..g.nspace() {
            let xv = g.position(s)[0];
            assert!((px.get(s, 2) - Complex64::new(-2.0 - 12.0 * xv, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn poincare_bound_for_reference_sample() {
        let g = Grid::new(1, 65, 65, 1.0).unwrap();
        let v = ScalarField::from_real_fn(&g, |x, t| (PI * x[0]).sin() * t);
        let mut last = 0.0;
        for rho in [4.0, 8.0, 16.0, 32.0] {
            let r = poincare_ratio(&v, &[1.0], rho, Sign::Plus).unwrap();
            assert!(r <= 2.0, "ρ={rho}: {r}");
            last = r;
        }
        assert!(last > 0.1);
        let w = ScalarField::from_real_fn(&g, |x, t| (PI * x[0]).sin() * (1.0 - t));
        assert!(poincare_ratio(&w, &[1.0], 4.0, Sign::Minus).unwrap() <= 2.0);
        assert!(poincare_ratio(&w, &[1.0], 4.0, Sign::Plus).is_err());
    }

    #[test]
    fn rejects_trivial_and_inadmissible_samples() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let q = Potential::zero(&g);
        assert!(carleman_ratio(&ScalarField::zeros(&g), &q, &[1.0], 4.0, Sign::Plus).is_err());
        let bad = ScalarField::from_real_fn(&g, |_, t| t);
        assert!(matches!(carleman_ratio(&bad, &q, &[1.0], 4.0, Sign::Plus), Err(Error::BoundaryCondition(_))));
    }

    #[test]
    fn carleman_ratio_bounded_in_rho() {
        let g = Grid::new(1, 65, 65, 1.0).unwrap();
        let v = ScalarField::from_real_fn(&g, |x, t| (PI * x[0]).sin() * t);
        let q0 = Potential::zero(&g);
        let q = Potential::from_fn(&g, |x, t| 0.5 * (x[0] + t).cos()).unwrap();
        for pot in [&q0, &q] {
            let base = carleman_ratio(&v, pot, &[1.0], 4.0, Sign::Plus).unwrap();
            for rho in [8.0, 16.0, 32.0] {
                assert!(carleman_ratio(&v, pot, &[1.0], rho, Sign::Plus).unwrap() <= 1.5 * base);
            }
        }
    }

    #[test]
    fn energy_identity_holds_to_quadrature_order() {
        let g = Grid::new(2, 33, 33, 1.0).unwrap();
        let v = ScalarField::from_real_fn(&g, |x, t| (PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * t * t);
        let (lhs, rhs) = energy_identity(&v).unwrap();
        assert!((lhs - rhs).abs() < 0.02 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn samples_are_admissible() {
        for sign in [Sign::Plus, Sign::Minus] {
            let g = Grid::new(2, 17, 9, 1.0).unwrap();
            for v in carleman_samples(&g, sign, 6, 11) {
                check_admissible(&v, sign).unwrap();
            }
        }
    }
}
