//! Moduli of continuity, Sobolev weights, and norms on the padded torus.
//!
//! A field on `Q̄` is zero-extended to a periodic box twice as long on every
//! axis. With `d = n+1` and node volume `V = hx^n·ht`,
//! `p̂(ζ) = (2π)^{−d/2} V Σ p e^{−iζ·(x,t)}` and frequencies are
//! `ζ_a = 2πk_a / L_a`. Sums over the lattice carry the cell volume
//! `Δζ = Π 2π/L_a`, which makes Parseval exact against the rectangle rule.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dtn::Basis;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Default upper end of the modulus domain.
pub const RHO_MAX: f64 = 1.0 / (E * E);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModulusFamily {
    /// `ρ + |ln ρ|^{−(1−2s(n+1))/8}`
    Psi,
    /// `ρ + |ln|ln ρ||^{−s}`
    Phi,
    /// `|ln ρ|^{−(1−2s(n+1))/(n+3)} + ρ`
    Theta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusParams {
    pub family: ModulusFamily,
    pub s: f64,
    pub n: usize,
    pub rho_max: f64,
}

impl ModulusParams {
    pub fn new(family: ModulusFamily, s: f64, n: usize) -> Result<Self> {
        let nf = n as f64;
        let ok = match family {
            ModulusFamily::Psi | ModulusFamily::Theta => {
                s > 1.0 / (2.0 * (nf + 3.0)) && s < 1.0 / (2.0 * (nf + 1.0))
            }
            ModulusFamily::Phi => s > 0.0 && s < 0.5,
        };
        if !ok || n == 0 {
            return Err(Error::InvalidArgument(format!("exponent s = {s} is not admissible for {family:?} with n = {n}")));
        }
        Ok(ModulusParams { family, s, n, rho_max: RHO_MAX })
    }

    /// Moves the end of the domain; the formula must stay finite below it.
    pub fn with_rho_max(mut self, rho_max: f64) -> Result<Self> {
        let limit = match self.family {
            ModulusFamily::Phi => 1.0 / E,
            _ => 1.0,
        };
        if !(rho_max > 0.0 && rho_max < limit) {
            return Err(Error::InvalidArgument(format!("ρ_max must lie in (0, {limit}), got {rho_max}")));
        }
        self.rho_max = rho_max;
        Ok(self)
    }

    fn formula(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let l = rho.ln().abs();
        let nf = self.n as f64;
        match self.family {
            ModulusFamily::Psi => rho + l.powf(-(1.0 - 2.0 * self.s * (nf + 1.0)) / 8.0),
            ModulusFamily::Phi => rho + l.ln().abs().powf(-self.s),
            ModulusFamily::Theta => l.powf(-(1.0 - 2.0 * self.s * (nf + 1.0)) / (nf + 3.0)) + rho,
        }
    }
}

/// Value of the modulus on `[0, ρ_max]`, continuous at 0 with value 0.
pub fn modulus_eval(p: &ModulusParams, rho: f64) -> Result<f64> {
    if !(0.0..=p.rho_max).contains(&rho) {
        return Err(Error::InvalidArgument(format!("ρ = {rho} lies outside [0, {}]", p.rho_max)));
    }
    Ok(p.formula(rho))
}

/// Modulus on `[0, ∞)`: the formula up to `ρ_max`, then the linear bound
/// `modulus(ρ_max)·δ/ρ_max` used for large perturbations.
pub fn modulus_extended(p: &ModulusParams, delta: f64) -> f64 {
    if delta <= p.rho_max {
        p.formula(delta.max(0.0))
    } else {
        p.formula(p.rho_max) * delta / p.rho_max
    }
}

/// Exponents `(r, s)` of the input and output spaces of a boundary map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevExponents {
    pub r_in: f64,
    pub s_in: f64,
    pub r_out: f64,
    pub s_out: f64,
}

impl SobolevExponents {
    pub fn unit() -> Self {
        SobolevExponents { r_in: 0.0, s_in: 0.0, r_out: 0.0, s_out: 0.0 }
    }

    /// `H^{−1/2,−1/4} → H^{1/2,1/4}`.
    pub fn dtn_difference() -> Self {
        SobolevExponents { r_in: -0.5, s_in: -0.25, r_out: 0.5, s_out: 0.25 }
    }
}

/// `(1+ξ²)^{r/2} + (1+τ²)^{s/2}`.
pub fn sobolev_weight(xi: f64, tau: f64, r: f64, s: f64) -> f64 {
    (1.0 + xi * xi).powf(0.5 * r) + (1.0 + tau * tau).powf(0.5 * s)
}

/// Diagonal weights of a basis.
pub fn boundary_sobolev_weights(basis: &Basis, r: f64, s: f64) -> Vec<f64> {
    (0..basis.len())
        .map(|i| {
            let (xi, tau) = basis.frequency(i);
            sobolev_weight(xi, tau, r, s)
        })
        .collect()
}

/// Zero-padded periodic box around `Q̄` and its Fourier lattice.
#[derive(Clone)]
pub struct Torus {
    grid: Grid,
    /// Padded point counts `(N_x1, N_x2, N_t)`; `N_x2 = 1` when `n = 1`.
    dims: [usize; 3],
    lengths: [f64; 3],
    ffts: [Arc<dyn Fft<f64>>; 3],
    iffts: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Torus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Torus").field("dims", &self.dims).field("lengths", &self.lengths).finish()
    }
}

impl Torus {
    pub fn new(grid: &Grid) -> Self {
        let nxp = 2 * (grid.nx() - 1);
        let ntp = 2 * (grid.nt() - 1);
        let dims = [nxp, if grid.dim() == 2 { nxp } else { 1 }, ntp];
        let lengths = [
            nxp as f64 * grid.hx(),
            if grid.dim() == 2 { nxp as f64 * grid.hx() } else { 1.0 },
            ntp as f64 * grid.ht(),
        ];
        let mut planner = FftPlanner::new();
        let ffts = dims.map(|d| planner.plan_fft(d, FftDirection::Forward));
        let iffts = dims.map(|d| planner.plan_fft(d, FftDirection::Inverse));
        Torus { grid: grid.clone(), dims, lengths, ffts, iffts }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of the padded box.
    pub fn box_volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    fn node_volume(&self) -> f64 {
        self.grid.hx().powi(self.grid.dim() as i32) * self.grid.ht()
    }

    /// `Δζ = Π 2π/L_a` over the active axes.
    pub fn cell_volume(&self) -> f64 {
        let mut v = 2.0 * PI / self.lengths[0] * 2.0 * PI / self.lengths[2];
        if self.grid.dim() == 2 {
            v *= 2.0 * PI / self.lengths[1];
        }
        v
    }

    fn normalization(&self) -> f64 {
        (2.0 * PI).powf(-0.5 * (self.grid.dim() + 1) as f64) * self.node_volume()
    }

    #[inline]
    fn signed(k: usize, n: usize) -> i64 {
        if k >= n.div_ceil(2) && n > 1 {
            k as i64 - n as i64
        } else {
            k as i64
        }
    }

    /// Lattice position `(k_x1, k_x2, k_t)` of flat index `idx`.
    pub fn lattice(&self, idx: usize) -> [usize; 3] {
        let [a, b, _] = self.dims;
        [idx % a, (idx / a) % b, idx / (a * b)]
    }

    pub fn index(&self, k: [usize; 3]) -> usize {
        k[0] + self.dims[0] * (k[1] + self.dims[1] * k[2])
    }

    /// Signed integer frequency of a lattice index.
    pub fn signed_lattice(&self, idx: usize) -> [i64; 3] {
        let k = self.lattice(idx);
        [Self::signed(k[0], self.dims[0]), Self::signed(k[1], self.dims[1]), Self::signed(k[2], self.dims[2])]
    }

    /// Index of the lattice point with the given signed integer frequency.
    pub fn index_of_signed(&self, k: [i64; 3]) -> usize {
        let wrap = |v: i64, n: usize| v.rem_euclid(n as i64) as usize;
        self.index([wrap(k[0], self.dims[0]), wrap(k[1], self.dims[1]), wrap(k[2], self.dims[2])])
    }

    /// `ζ = (ξ₁, ξ₂, τ)` at a flat index; `ξ₂ = 0` when `n = 1`.
    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let k = self.signed_lattice(idx);
        let mut z = [0.0; 3];
        for a in 0..3 {
            z[a] = 2.0 * PI * k[a] as f64 / self.lengths[a];
        }
        if self.grid.dim() == 1 {
            z[1] = 0.0;
        }
        z
    }

    pub fn frequency_norm(&self, idx: usize) -> f64 {
        let z = self.frequency(idx);
        (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
    }

    /// Zero extension of a field to the torus.
    pub fn embed(&self, p: &ScalarField) -> Result<Vec<Complex64>> {
        self.grid.check_same(p.grid(), "torus and field")?;
        let mut out = vec![ZERO; self.len()];
        let g = &self.grid;
        for k in 0..g.nt() {
            for s in 0..g.nspace() {
                let [i, j] = g.spatial_coords(s);
                out[self.index([i, j, k])] = p.get(s, k);
            }
        }
        Ok(out)
    }

    /// Values of a torus array on the nodes of `Q̄`.
    pub fn restrict(&self, values: &[Complex64]) -> ScalarField {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.len());
        for k in 0..g.nt() {
            for s in 0..g.nspace() {
                let [i, j] = g.spatial_coords(s);
                out.push(values[self.index([i, j, k])]);
            }
        }
        ScalarField::from_raw(g, out)
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [a, b, c] = self.dims;
        // axis 0: contiguous rows
        for row in data.chunks_mut(a) {
            plans[0].process(row);
        }
        let mut buf = Vec::new();
        for (axis, stride, count) in [(1usize, a, b), (2usize, a * b, c)] {
            if count == 1 {
                continue;
            }
            buf.resize(count, ZERO);
            let outer = data.len() / (stride * count);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * stride * count + inner;
                    for m in 0..count {
                        buf[m] = data[base + m * stride];
                    }
                    plans[axis].process(&mut buf);
                    for m in 0..count {
                        data[base + m * stride] = buf[m];
                    }
                }
            }
        }
    }

    /// `p̂` on the whole lattice.
    pub fn spectrum(&self, p: &ScalarField) -> Result<Vec<Complex64>> {
        Ok(self.spectrum_of_values(&self.embed(p)?))
    }

    /// Transform of an arbitrary torus array (not necessarily supported in `Q̄`).
    pub fn spectrum_of_values(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.transform(&mut data, &self.ffts);
        let c = self.normalization();
        data.iter_mut().for_each(|v| *v *= c);
        data
    }

    /// Inverse of [`Torus::spectrum`] on the whole torus.
    pub fn synthesize(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectrum.to_vec();
        self.transform(&mut data, &self.iffts);
        let c = 1.0 / (self.normalization() * self.len() as f64);
        data.iter_mut().for_each(|v| *v *= c);
        data
    }

    /// `(Σ w(|ζ|) |p̂|² Δζ)^{1/2}`.
    pub fn weighted_norm(&self, spectrum: &[Complex64], w: impl Fn(f64) -> f64) -> f64 {
        let dz = self.cell_volume();
        let sum: f64 = spectrum.iter().enumerate().map(|(i, v)| w(self.frequency_norm(i)) * v.norm_sqr()).sum();
        (sum * dz).sqrt()
    }

    pub fn hminus1_of_spectrum(&self, spectrum: &[Complex64]) -> f64 {
        self.weighted_norm(spectrum, |z| 1.0 / (1.0 + z * z))
    }

    /// Rectangle-rule `L²` norm of a torus array.
    pub fn l2_of_values(&self, values: &[Complex64]) -> f64 {
        (self.node_volume() * values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }
}

/// `H^{−1}` norm of the zero extension of `p`, on the padded torus.
pub fn hminus1_norm(p: &ScalarField) -> f64 {
    let torus = Torus::new(p.grid());
    let spec = torus.spectrum(p).expect("field lives on its own grid");
    torus.hminus1_of_spectrum(&spec)
}

/// `H¹` norm on the padded torus.
pub fn h1_norm(p: &ScalarField) -> f64 {
    let torus = Torus::new(p.grid());
    let spec = torus.spectrum(p).expect("field lives on its own grid");
    torus.weighted_norm(&spec, |z| 1.0 + z * z)
}

/// Rectangle-rule `L²` norm of the zero extension.
pub fn torus_l2_norm(p: &ScalarField) -> f64 {
    let torus = Torus::new(p.grid());
    torus.l2_of_values(&torus.embed(p).expect("field lives on its own grid"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holder_norm: f64,
    pub l2_norm: f64,
}

/// Compares `max|u|` with `‖u‖_{C^{0,α}}^{d/(d+2α)} ‖u‖_{L²}^{2α/(d+2α)}`, `d = n+1`.
pub fn holder_interpolation_check(u: &ScalarField, alpha: f64) -> Result<HolderReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent must lie in (0,1], got {alpha}")));
    }
    let g = u.grid();
    if g.len() > 6000 {
        return Err(Error::InvalidArgument(format!(
            "pairwise Hölder quotient needs at most 6000 nodes, grid has {}",
            g.len()
        )));
    }
    let lhs = u.max_abs();
    let l2 = u.l2_norm();
    let pts: Vec<([f64; 3], Complex64)> = (0..g.len())
        .map(|i| {
            let (s, k) = (i % g.nspace(), i / g.nspace());
            let x = g.position(s);
            ([x[0], x[1], g.time(k)], u.values()[i])
        })
        .collect();
    let mut semi = 0.0f64;
    for (a, (pa, va)) in pts.iter().enumerate() {
        for (pb, vb) in &pts[a + 1..] {
            let d2 = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2);
            semi = semi.max((va - vb).norm() / d2.powf(0.5 * alpha));
        }
    }
    let holder = lhs + semi;
    let d = (g.dim() + 1) as f64;
    let rhs = holder.powf(d / (d + 2.0 * alpha)) * l2.powf(2.0 * alpha / (d + 2.0 * alpha));
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(HolderReport { lhs, rhs, ratio, holder_norm: holder, l2_norm: l2 })
}
