//! θ-scheme solvers for `(∂_t − Δ + β·∇ + c)u = f` on the grid and its
//! semilinear counterpart, plus the one-sided Neumann trace.
//!
//! Backward problems `(−∂_t − Δ + β·∇ + c)u = f` with final data are solved
//! by reversing every input in time, running the forward stepper and
//! reversing the output, so the reflection identity holds bit for bit.

use num_complex::Complex64;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::field::{BoundaryField, Potential, ScalarField};
use crate::grid::Grid;
use crate::semilinear::Nonlinearity;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Time discretization: `θ = 1/2` is Crank–Nicolson, `θ = 1` implicit Euler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scheme {
    theta: f64,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::crank_nicolson()
    }
}

/// Data of one linear initial-boundary value problem.
#[derive(Clone, Copy, Debug)]
pub struct LinearProblem<'a> {
    /// Zero-order coefficient `c(x,t)`, time-major; `None` means `c = 0`.
    pub coefficient: Option<&'a [f64]>,
    /// Constant drift `β`; the second component is ignored when `n = 1`.
    pub drift: [f64; 2],
    pub dirichlet: &'a BoundaryField,
    /// Values at `t = 0` on every spatial node; `None` means zero.
    pub initial: Option<&'a [Complex64]>,
    pub source: Option<&'a ScalarField>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iterations: 50, tolerance: 1e-10, max_halvings: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct SemilinearSolution {
    pub field: ScalarField,
    /// Newton iterations spent on each time step.
    pub iterations: Vec<usize>,
    pub max_residual: f64,
}

/// Nearest-neighbour structure of the interior unknowns.
struct Stencil {
    n: usize,
    nx: usize,
    h: f64,
    interior: Vec<usize>,
    unknown_of: Vec<usize>,
    strides: [usize; 2],
}

impl Stencil {
    fn new(grid: &Grid) -> Self {
        let interior = grid.interior();
        let mut unknown_of = vec![usize::MAX; grid.nspace()];
        for (r, &s) in interior.iter().enumerate() {
            unknown_of[s] = r;
        }
        Stencil { n: grid.dim(), nx: grid.nx(), h: grid.hx(), interior, unknown_of, strides: [1, grid.nx()] }
    }

    fn bandwidth(&self) -> usize {
        if self.n == 1 {
            1
        } else {
            self.nx - 2
        }
    }

    /// `(−Δ + β·∇ + c) u` at interior node `s`.
    #[inline]
    fn apply(&self, u: &[Complex64], c: f64, beta: [f64; 2], s: usize) -> Complex64 {
        let ih2 = 1.0 / (self.h * self.h);
        let i2h = 0.5 / self.h;
        let mut acc = u[s] * (2.0 * self.n as f64 * ih2 + c);
        for a in 0..self.n {
            let st = self.strides[a];
            let (up, um) = (u[s + st], u[s - st]);
            acc -= (up + um) * ih2;
            acc += (up - um) * (beta[a] * i2h);
        }
        acc
    }

    /// Off-diagonal weights `(stride, minus, plus)` of `−Δ + β·∇` per axis.
    fn couplings(&self, beta: [f64; 2]) -> Vec<(usize, f64, f64)> {
        let ih2 = 1.0 / (self.h * self.h);
        let i2h = 0.5 / self.h;
        (0..self.n).map(|a| (self.strides[a], -ih2 - beta[a] * i2h, -ih2 + beta[a] * i2h)).collect()
    }
}

impl Scheme {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidArgument(format!("θ must lie in [1/2, 1], got {theta}")));
        }
        Ok(Scheme { theta })
    }

    pub fn crank_nicolson() -> Self {
        Scheme { theta: 0.5 }
    }

    pub fn implicit_euler() -> Self {
        Scheme { theta: 1.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Solves `(∂_t − Δ + q)u = f` with Dirichlet data on `Σ` and `u(·,0) = u0`.
    pub fn solve_forward(
        &self,
        q: &Potential,
        bdata: &BoundaryField,
        u0: Option<&[Complex64]>,
        f: Option<&ScalarField>,
    ) -> Result<ScalarField> {
        let grid = q.grid();
        self.solve(
            grid,
            &LinearProblem {
                coefficient: (!q.is_zero()).then(|| q.values()),
                drift: [0.0; 2],
                dirichlet: bdata,
                initial: u0,
                source: f,
            },
        )
    }

    /// Solves `(−∂_t − Δ + q)u = f` with Dirichlet data on `Σ` and `u(·,T) = uT`.
    pub fn solve_backward(
        &self,
        q: &Potential,
        bdata: &BoundaryField,
        u_final: Option<&[Complex64]>,
        f: Option<&ScalarField>,
    ) -> Result<ScalarField> {
        let qr = q.time_reversed();
        let br = bdata.time_reversed();
        let fr = f.map(|f| f.time_reversed());
        let u = self.solve_forward(&qr, &br, u_final, fr.as_ref())?;
        Ok(u.time_reversed())
    }

    /// Backward problem with a general coefficient and drift, by time reversal.
    pub fn solve_reversed(&self, grid: &Grid, problem: &LinearProblem) -> Result<ScalarField> {
        let coef = problem.coefficient.map(|c| reverse_slices(c, grid.nspace()));
        let dir = problem.dirichlet.time_reversed();
        let src = problem.source.map(|f| f.time_reversed());
        let u = self.solve(
            grid,
            &LinearProblem {
                coefficient: coef.as_deref(),
                drift: problem.drift,
                dirichlet: &dir,
                initial: problem.initial,
                source: src.as_ref(),
            },
        )?;
        Ok(u.time_reversed())
    }

    /// Forward θ-scheme for a general linear problem.
    pub fn solve(&self, grid: &Grid, problem: &LinearProblem) -> Result<ScalarField> {
        grid.check_same(problem.dirichlet.grid(), "grid and boundary data")?;
        if let Some(f) = problem.source {
            grid.check_same(f.grid(), "grid and source")?;
        }
        if let Some(c) = problem.coefficient {
            if c.len() != grid.len() {
                return Err(Error::GridMismatch("grid and coefficient"));
            }
        }
        let ns = grid.nspace();
        if let Some(u0) = problem.initial {
            if u0.len() != ns {
                return Err(Error::GridMismatch("grid and initial values"));
            }
        }
        let st = Stencil::new(grid);
        let theta = self.theta;
        let ht = grid.ht();
        let beta = problem.drift;
        let couplings = st.couplings(beta);
        let coef_slice = |k: usize| problem.coefficient.map(|c| &c[k * ns..(k + 1) * ns]);
        let bdata = problem.dirichlet;

        let mut values = vec![ZERO; grid.len()];
        if let Some(u0) = problem.initial {
            values[..ns].copy_from_slice(u0);
        }
        let mut mismatch = 0.0f64;
        for (b, node) in grid.boundary_nodes().iter().enumerate() {
            let g = bdata.get(b, 0);
            mismatch = mismatch.max((values[node.spatial] - g).norm());
            values[node.spatial] = g;
        }
        if problem.initial.is_some() && mismatch > 1e-10 {
            log::warn!("initial data disagrees with boundary data at t=0 by {mismatch:.3e}; boundary value kept");
        }

        let nu = st.interior.len();
        let mut rhs = vec![ZERO; nu];
        let mut lu: Option<BandLu> = None;
        let mut lu_coef: Option<&[f64]> = None;
        for k in 0..grid.nt() - 1 {
            let (prev, next) = values.split_at_mut((k + 1) * ns);
            let u_prev = &prev[k * ns..];
            let next = &mut next[..ns];
            let c_prev = coef_slice(k);
            let c_next = coef_slice(k + 1);
            for (b, node) in grid.boundary_nodes().iter().enumerate() {
                next[node.spatial] = bdata.get(b, k + 1);
            }
            for (r, &s) in st.interior.iter().enumerate() {
                let cp = c_prev.map_or(0.0, |c| c[s]);
                let mut acc = u_prev[s] - st.apply(u_prev, cp, beta, s) * ((1.0 - theta) * ht);
                if let Some(f) = problem.source {
                    acc += (f.get(s, k + 1) * theta + f.get(s, k) * (1.0 - theta)) * ht;
                }
                for &(stride, wm, wp) in &couplings {
                    if st.unknown_of[s - stride] == usize::MAX {
                        acc -= next[s - stride] * (theta * ht * wm);
                    }
                    if st.unknown_of[s + stride] == usize::MAX {
                        acc -= next[s + stride] * (theta * ht * wp);
                    }
                }
                rhs[r] = acc;
            }
            let reuse = lu.is_some() && lu_coef == c_next;
            if !reuse {
                let mut m = BandMatrix::zeros(nu, st.bandwidth());
                let diag0 = 1.0 + theta * ht * 2.0 * grid.dim() as f64 / (grid.hx() * grid.hx());
                for (r, &s) in st.interior.iter().enumerate() {
                    let c = c_next.map_or(0.0, |c| c[s]);
                    m.add(r, r, diag0 + theta * ht * c);
                    for &(stride, wm, wp) in &couplings {
                        let rm = st.unknown_of[s - stride];
                        if rm != usize::MAX {
                            m.add(r, rm, theta * ht * wm);
                        }
                        let rp = st.unknown_of[s + stride];
                        if rp != usize::MAX {
                            m.add(r, rp, theta * ht * wp);
                        }
                    }
                }
                let factored = m.factor().map_err(|(row, pivot)| {
                    let s = st.interior[row];
                    let c = c_next.map_or(0.0, |c| c[s]);
                    Error::SingularSystem {
                        step: k + 1,
                        reason: format!(
                            "pivot {pivot:.3e} at interior node {s}; 1+θ·ht·q = {:.3e} there",
                            1.0 + theta * ht * c
                        ),
                    }
                })?;
                lu = Some(factored);
                lu_coef = c_next;
            }
            lu.as_ref().expect("factorization present").solve_in_place(&mut rhs);
            for (r, &s) in st.interior.iter().enumerate() {
                next[s] = rhs[r];
            }
        }
        let field = ScalarField::from_raw(grid, values);
        if !field.is_finite() {
            return Err(Error::SingularSystem { step: grid.nt() - 1, reason: "non-finite solution values".into() });
        }
        Ok(field)
    }

    /// Newton-stepped θ-scheme for `(∂_t − Δ)u + a(x,t,u) = 0` with `u = g` on `Σ_p`.
    ///
    /// The residual of each step is scaled by `ht`, so the tolerance measures
    /// an increment in `u`, relative to `1 + max|u|` at the previous step so
    /// that rapidly growing data converge as well.
    pub fn solve_semilinear(
        &self,
        grid: &Grid,
        a: &Nonlinearity,
        bdata: &BoundaryField,
        u0: Option<&[f64]>,
        opts: &NewtonOptions,
    ) -> Result<SemilinearSolution> {
        grid.check_same(bdata.grid(), "grid and boundary data")?;
        if bdata.values().iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidArgument("semilinear boundary data must be real".into()));
        }
        let ns = grid.nspace();
        if let Some(u0) = u0 {
            if u0.len() != ns {
                return Err(Error::GridMismatch("grid and initial values"));
            }
        }
        let st = Stencil::new(grid);
        let theta = self.theta;
        let ht = grid.ht();
        let nu = st.interior.len();
        let couplings = st.couplings([0.0; 2]);
        let diag0 = 2.0 * grid.dim() as f64 / (grid.hx() * grid.hx());

        let mut values = vec![0.0f64; grid.len()];
        if let Some(u0) = u0 {
            values[..ns].copy_from_slice(u0);
        }
        for (b, node) in grid.boundary_nodes().iter().enumerate() {
            values[node.spatial] = bdata.get(b, 0).re;
        }
        let lap = |u: &[f64], s: usize| -> f64 {
            let mut acc = diag0 * u[s];
            for &(stride, wm, _) in &couplings {
                acc += wm * (u[s - stride] + u[s + stride]);
            }
            acc
        };
        let pos: Vec<[f64; 2]> = (0..ns).map(|s| grid.position(s)).collect();

        let mut iterations = Vec::with_capacity(grid.nt() - 1);
        let mut max_residual = 0.0f64;
        let mut fvec = vec![0.0; nu];
        let mut trial = vec![0.0; ns];
        for k in 0..grid.nt() - 1 {
            let (t0, t1) = (grid.time(k), grid.time(k + 1));
            let (prev, next) = values.split_at_mut((k + 1) * ns);
            let u_prev = &prev[k * ns..];
            let next = &mut next[..ns];
            next.copy_from_slice(u_prev);
            for (b, node) in grid.boundary_nodes().iter().enumerate() {
                next[node.spatial] = bdata.get(b, k + 1).re;
            }
            let explicit: Vec<f64> = st
                .interior
                .iter()
                .map(|&s| u_prev[s] - (1.0 - theta) * ht * (lap(u_prev, s) + a.value(pos[s], t0, u_prev[s])))
                .collect();
            let residual = |u: &[f64], out: &mut [f64]| -> f64 {
                let mut norm = 0.0f64;
                for (r, &s) in st.interior.iter().enumerate() {
                    let v = u[s] + theta * ht * (lap(u, s) + a.value(pos[s], t1, u[s])) - explicit[r];
                    out[r] = v;
                    norm = norm.max(v.abs());
                }
                norm
            };
            let mut norm = residual(next, &mut fvec);
            let tol = opts.tolerance * (1.0 + next.iter().chain(u_prev).fold(0.0f64, |m, v| m.max(v.abs())));
            let mut iters = 0;
            while !(norm <= tol) {
                if iters == opts.max_iterations || !norm.is_finite() {
                    return Err(Error::NewtonFailure { step: k + 1, iterations: iters, residual: norm });
                }
                iters += 1;
                let mut m = BandMatrix::zeros(nu, st.bandwidth());
                for (r, &s) in st.interior.iter().enumerate() {
                    m.add(r, r, 1.0 + theta * ht * (diag0 + a.slope(pos[s], t1, next[s])));
                    for &(stride, wm, wp) in &couplings {
                        let rm = st.unknown_of[s - stride];
                        if rm != usize::MAX {
                            m.add(r, rm, theta * ht * wm);
                        }
                        let rp = st.unknown_of[s + stride];
                        if rp != usize::MAX {
                            m.add(r, rp, theta * ht * wp);
                        }
                    }
                }
                let lu = m.factor().map_err(|(row, pivot)| Error::SingularSystem {
                    step: k + 1,
                    reason: format!("newton jacobian pivot {pivot:.3e} at interior node {}", st.interior[row]),
                })?;
                let mut du = fvec.clone();
                lu.solve_in_place(&mut du);
                let mut lambda = 1.0;
                let mut accepted = false;
                let mut trial_f = vec![0.0; nu];
                for _ in 0..=opts.max_halvings {
                    trial.copy_from_slice(next);
                    for (r, &s) in st.interior.iter().enumerate() {
                        trial[s] -= lambda * du[r];
                    }
                    let tn = residual(&trial, &mut trial_f);
                    if tn < norm || tn <= tol {
                        norm = tn;
                        accepted = true;
                        break;
                    }
                    lambda *= 0.5;
                }
                if !accepted {
                    return Err(Error::NewtonFailure { step: k + 1, iterations: iters, residual: norm });
                }
                next.copy_from_slice(&trial);
                fvec.copy_from_slice(&trial_f);
            }
            max_residual = max_residual.max(norm);
            iterations.push(iters);
        }
        let field = ScalarField::from_raw(grid, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect());
        Ok(SemilinearSolution { field, iterations, max_residual })
    }
}

pub(crate) fn reverse_slices<T: Copy>(v: &[T], chunk: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(v.len());
    for c in v.chunks(chunk).rev() {
        out.extend_from_slice(c);
    }
    out
}

/// Outward normal derivative on `Σ` by the second-order one-sided stencil.
pub fn neumann_trace(u: &ScalarField) -> Result<BoundaryField> {
    let g = u.grid();
    if g.nx() < 4 {
        return Err(Error::InvalidGrid(format!("normal-derivative stencil needs nx >= 4, got {}", g.nx())));
    }
    let inv = 0.5 / g.hx();
    let last = g.nx() - 1;
    let stencils: Vec<[usize; 3]> = g
        .boundary_nodes()
        .iter()
        .map(|node| {
            let axis = node.face / 2;
            let at = |m: usize| {
                let mut c = node.coords;
                c[axis] = m;
                g.spatial_index(c[0], c[1])
            };
            if node.face % 2 == 0 {
                [at(0), at(1), at(2)]
            } else {
                [at(last), at(last - 1), at(last - 2)]
            }
        })
        .collect();
    let mut values = Vec::with_capacity(g.boundary_len() * g.nt());
    for k in 0..g.nt() {
        let slice = u.slice(k);
        for st in &stencils {
            values.push((slice[st[0]] * 3.0 - slice[st[1]] * 4.0 + slice[st[2]]) * inv);
        }
    }
    Ok(BoundaryField::from_raw(g, values))
}
