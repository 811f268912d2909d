//! Dirichlet-to-Neumann maps as oracles and as matrices in a sine basis.
//!
//! Lateral basis functions are `√2 sin(jπs) · √(2/T) sin(mπt/T)` on one
//! face (`s` the arc-length coordinate along it; the spatial factor is 1 in
//! one dimension). They vanish at `t = 0`, at `t = T` and on box corners, and
//! are orthonormal under the trapezoidal rule on `Σ` for `j < nx−1`,
//! `m < nt−1`. Initial-value modes `Π_a √2 sin(k_a π x_a)` extend the input
//! space for the map with nonzero data on `Ω × {0}`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryField, Potential, ScalarField};
use crate::forward::{neumann_trace, Scheme};
use crate::grid::{DirectionMask, Grid};
use crate::norms::{boundary_sobolev_weights, SobolevExponents};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Anything that maps boundary data (and optional initial values) to Neumann data.
pub trait DtnOracle: Sync {
    fn grid(&self) -> &Grid;
    fn apply(&self, g: &BoundaryField, u0: Option<&[Complex64]>) -> Result<BoundaryField>;
}

/// Exact discrete map of a known potential.
#[derive(Clone, Debug)]
pub struct SimulatedDtn {
    pub scheme: Scheme,
    pub potential: Potential,
}

impl SimulatedDtn {
    pub fn new(scheme: Scheme, potential: Potential) -> Self {
        SimulatedDtn { scheme, potential }
    }
}

impl DtnOracle for SimulatedDtn {
    fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    fn apply(&self, g: &BoundaryField, u0: Option<&[Complex64]>) -> Result<BoundaryField> {
        dtn_apply(&self.scheme, &self.potential, g, u0)
    }
}

/// `g ↦ ∂_ν u` where `u` solves the forward problem with potential `q`.
pub fn dtn_apply(scheme: &Scheme, q: &Potential, g: &BoundaryField, u0: Option<&[Complex64]>) -> Result<BoundaryField> {
    let u = scheme.solve_forward(q, g, u0, None)?;
    neumann_trace(&u)
}

/// DtN map with inputs supported in `support` and outputs observed on `obs`.
pub fn partial_dtn_apply(
    scheme: &Scheme,
    q: &Potential,
    g: &BoundaryField,
    support: &DirectionMask,
    obs: &DirectionMask,
) -> Result<BoundaryField> {
    let outside = g.max_abs_outside(support);
    if outside > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "boundary data does not vanish outside the support mask (max {outside:.3e})"
        )));
    }
    Ok(dtn_apply(scheme, q, g, None)?.restricted(obs))
}

/// `∫_Σ [(Λ_q − Λ_q̃) g] h` by trapezoidal quadrature.
pub fn pairing(scheme: &Scheme, q: &Potential, q_ref: &Potential, g: &BoundaryField, h: &BoundaryField) -> Result<Complex64> {
    q.grid().check_same(q_ref.grid(), "paired potentials")?;
    let d = dtn_apply(scheme, q, g, None)?.sub(&dtn_apply(scheme, q_ref, g, None)?)?;
    d.integrate_product(h)
}

/// Boundary pairing computed through an arbitrary data oracle.
pub fn oracle_pairing(
    data: &dyn DtnOracle,
    reference: &dyn DtnOracle,
    g: &BoundaryField,
    h: &BoundaryField,
) -> Result<Complex64> {
    let d = data.apply(g, None)?.sub(&reference.apply(g, None)?)?;
    d.integrate_product(h)
}

/// `∫_Q (q − q̃) u⁺_{q,g} u⁻_{q̃,h}`, the volume side of the pairing identity.
pub fn pairing_volume(
    scheme: &Scheme,
    q: &Potential,
    q_ref: &Potential,
    g: &BoundaryField,
    h: &BoundaryField,
) -> Result<Complex64> {
    let u_plus = scheme.solve_forward(q, g, None, None)?;
    let u_minus = scheme.solve_backward(q_ref, h, None, None)?;
    let p = q.difference(q_ref)?;
    p.mul(&u_plus)?.integrate_product(&u_minus)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    /// Sine modes per face along the boundary (ignored in one dimension).
    pub space_modes: usize,
    pub time_modes: usize,
    /// Sine modes per axis of the initial slice; 0 disables initial inputs.
    #[serde(default)]
    pub initial_modes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFunction {
    Lateral { face: usize, space: usize, time: usize },
    Initial { modes: [usize; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub spec: BasisSpec,
    pub faces: Vec<usize>,
    pub functions: Vec<BasisFunction>,
}

/// Finite boundary basis on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    grid: Grid,
    descriptor: BasisDescriptor,
}

impl Basis {
    /// Lateral modes on every face.
    pub fn new(grid: &Grid, spec: BasisSpec) -> Result<Self> {
        Self::on_faces(grid, spec, (0..grid.face_count()).collect())
    }

    /// Lateral modes on the faces whose open part lies inside `mask`.
    pub fn on_mask(grid: &Grid, spec: BasisSpec, mask: &DirectionMask) -> Result<Self> {
        let faces = (0..grid.face_count())
            .filter(|&f| {
                grid.boundary_nodes()
                    .iter()
                    .enumerate()
                    .filter(|(_, node)| node.face == f && (grid.dim() == 1 || (node.along > 0.0 && node.along < 1.0)))
                    .all(|(b, _)| mask.contains(b))
            })
            .collect();
        Self::on_faces(grid, spec, faces)
    }

    pub fn on_faces(grid: &Grid, spec: BasisSpec, faces: Vec<usize>) -> Result<Self> {
        let space_max = if grid.dim() == 1 { usize::MAX } else { grid.nx() - 2 };
        if spec.time_modes == 0 || spec.time_modes > grid.nt() - 2 {
            return Err(Error::InvalidArgument(format!(
                "time modes must lie in 1..={}, got {}",
                grid.nt() - 2,
                spec.time_modes
            )));
        }
        if grid.dim() == 2 && (spec.space_modes == 0 || spec.space_modes > space_max) {
            return Err(Error::InvalidArgument(format!(
                "space modes must lie in 1..={space_max}, got {}",
                spec.space_modes
            )));
        }
        if spec.initial_modes > grid.nx() - 2 {
            return Err(Error::InvalidArgument(format!(
                "initial modes must not exceed {}, got {}",
                grid.nx() - 2,
                spec.initial_modes
            )));
        }
        if faces.iter().any(|&f| f >= grid.face_count()) {
            return Err(Error::InvalidArgument("face index out of range".into()));
        }
        let space_modes = if grid.dim() == 1 { 1 } else { spec.space_modes };
        let mut functions = Vec::new();
        for &face in &faces {
            for space in 1..=space_modes {
                for time in 1..=spec.time_modes {
                    functions.push(BasisFunction::Lateral { face, space, time });
                }
            }
        }
        let k = spec.initial_modes;
        if grid.dim() == 1 {
            functions.extend((1..=k).map(|a| BasisFunction::Initial { modes: [a, 0] }));
        } else {
            for b in 1..=k {
                functions.extend((1..=k).map(|a| BasisFunction::Initial { modes: [a, b] }));
            }
        }
        Ok(Basis { grid: grid.clone(), descriptor: BasisDescriptor { spec, faces, functions } })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn descriptor(&self) -> &BasisDescriptor {
        &self.descriptor
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.descriptor.functions
    }

    pub fn len(&self) -> usize {
        self.descriptor.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptor.functions.is_empty()
    }

    pub fn has_initial(&self) -> bool {
        self.functions().iter().any(|f| matches!(f, BasisFunction::Initial { .. }))
    }

    /// `(|ξ|, τ)` of a basis function; initial modes carry `τ = 0`.
    pub fn frequency(&self, i: usize) -> (f64, f64) {
        match self.descriptor.functions[i] {
            BasisFunction::Lateral { space, time, .. } => {
                let xi = if self.grid.dim() == 1 { 0.0 } else { PI * space as f64 };
                (xi, PI * time as f64 / self.grid.t_final())
            }
            BasisFunction::Initial { modes } => {
                (PI * ((modes[0] * modes[0] + modes[1] * modes[1]) as f64).sqrt(), 0.0)
            }
        }
    }

    fn time_factor(&self, m: usize, k: usize) -> f64 {
        let t = self.grid.t_final();
        (2.0 / t).sqrt() * (PI * m as f64 * k as f64 / (self.grid.nt() - 1) as f64).sin()
    }

    fn space_factor(&self, face: usize, j: usize, b: usize) -> f64 {
        let node = self.grid.boundary_nodes()[b];
        if node.face != face {
            return 0.0;
        }
        if self.grid.dim() == 1 {
            return 1.0;
        }
        let i = match face / 2 {
            0 => node.coords[1],
            _ => node.coords[0],
        };
        2f64.sqrt() * (PI * j as f64 * i as f64 / (self.grid.nx() - 1) as f64).sin()
    }

    fn initial_factor(&self, modes: [usize; 2], s: usize) -> f64 {
        let [i, j] = self.grid.spatial_coords(s);
        let m = (self.grid.nx() - 1) as f64;
        let f = |k: usize, i: usize| 2f64.sqrt() * (PI * k as f64 * i as f64 / m).sin();
        if self.grid.dim() == 1 {
            f(modes[0], i)
        } else {
            f(modes[0], i) * f(modes[1], j)
        }
    }

    /// Boundary data and initial values of `Σ c_i e_i`.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Result<(BoundaryField, Option<Vec<Complex64>>)> {
        if coeffs.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of size {}",
                coeffs.len(),
                self.len()
            )));
        }
        let g = &self.grid;
        let nb = g.boundary_len();
        let mut values = vec![ZERO; nb * g.nt()];
        let mut initial = self.has_initial().then(|| vec![ZERO; g.nspace()]);
        for (c, f) in coeffs.iter().zip(self.functions()) {
            if *c == ZERO {
                continue;
            }
            match *f {
                BasisFunction::Lateral { face, space, time } => {
                    let sp: Vec<f64> = (0..nb).map(|b| self.space_factor(face, space, b)).collect();
                    for k in 0..g.nt() {
                        let tk = self.time_factor(time, k);
                        for b in 0..nb {
                            values[k * nb + b] += c * (sp[b] * tk);
                        }
                    }
                }
                BasisFunction::Initial { modes } => {
                    let u0 = initial.as_mut().expect("initial slot allocated");
                    for (s, v) in u0.iter_mut().enumerate() {
                        *v += c * self.initial_factor(modes, s);
                    }
                }
            }
        }
        Ok((BoundaryField::from_raw(g, values), initial))
    }

    /// Trapezoidal `L²` coefficients of boundary data (and initial values).
    pub fn project(&self, f: &BoundaryField, u0: Option<&[Complex64]>) -> Result<Vec<Complex64>> {
        self.grid.check_same(f.grid(), "basis and boundary field")?;
        let g = &self.grid;
        let nb = g.boundary_len();
        let tw: Vec<f64> = (0..g.nt()).map(|k| g.time_weight(k)).collect();
        Ok(self
            .functions()
            .iter()
            .map(|func| match *func {
                BasisFunction::Lateral { face, space, time } => {
                    let mut acc = ZERO;
                    for b in 0..nb {
                        let sp = self.space_factor(face, space, b);
                        if sp == 0.0 {
                            continue;
                        }
                        let w = sp * g.boundary_nodes()[b].weight;
                        for (k, twk) in tw.iter().enumerate() {
                            acc += f.get(b, k) * (w * self.time_factor(time, k) * twk);
                        }
                    }
                    acc
                }
                BasisFunction::Initial { modes } => match u0 {
                    Some(u0) => (0..g.nspace())
                        .map(|s| u0[s] * (self.initial_factor(modes, s) * g.space_weight(s)))
                        .sum(),
                    None => ZERO,
                },
            })
            .collect())
    }
}

/// Matrix of a boundary map between two bases, with Sobolev exponents attached.
#[derive(Clone, Debug, PartialEq)]
pub struct DtnMatrix {
    pub matrix: DMatrix<Complex64>,
    pub input: Basis,
    pub output: Basis,
    pub exponents: SobolevExponents,
}

/// Column `j` is the output-basis projection of the response to input function `j`,
/// restricted to `obs` when given.
pub fn assemble_dtn_matrix(
    oracle: &dyn DtnOracle,
    input: &Basis,
    output: &Basis,
    obs: Option<&DirectionMask>,
    exponents: SobolevExponents,
) -> Result<DtnMatrix> {
    oracle.grid().check_same(input.grid(), "oracle and input basis")?;
    oracle.grid().check_same(output.grid(), "oracle and output basis")?;
    let columns: Vec<Vec<Complex64>> = (0..input.len())
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; input.len()];
            e[j] = Complex64::new(1.0, 0.0);
            let column = || -> Result<Vec<Complex64>> {
                let (g, u0) = input.synthesize(&e)?;
                let mut resp = oracle.apply(&g, u0.as_deref())?;
                if let Some(obs) = obs {
                    resp = resp.restricted(obs);
                }
                output.project(&resp, None)
            };
            column().map_err(|e| Error::Assembly { column: j, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let matrix = DMatrix::from_fn(output.len(), input.len(), |i, j| columns[j][i]);
    Ok(DtnMatrix { matrix, input: input.clone(), output: output.clone(), exponents })
}

impl DtnMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn difference(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        if self.input != other.input || self.output != other.output {
            return Err(Error::GridMismatch("DtN matrices with different bases"));
        }
        Ok(DtnMatrix { matrix: &self.matrix - &other.matrix, ..self.clone() })
    }

    /// `W_out · M · W_in⁻¹`.
    pub fn weighted(&self) -> DMatrix<Complex64> {
        let e = self.exponents;
        let w_in = boundary_sobolev_weights(&self.input, e.r_in, e.s_in);
        let w_out = boundary_sobolev_weights(&self.output, e.r_out, e.s_out);
        DMatrix::from_fn(self.rows(), self.cols(), |i, j| self.matrix[(i, j)] * (w_out[i] / w_in[j]))
    }

    /// Singular values of the weighted matrix, in decreasing order.
    pub fn weighted_singular_values(&self) -> Vec<f64> {
        singular_values(&self.weighted())
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(self)
    }
}

pub(crate) fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.is_empty() {
        return vec![];
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Largest singular value of `W_out · M · W_in⁻¹`.
pub fn operator_norm(m: &DtnMatrix) -> f64 {
    m.weighted_singular_values().first().copied().unwrap_or(0.0)
}

/// Seeded complex Gaussian matrix `E` with `‖W_out E W_in⁻¹‖ = delta`.
pub fn noise_matrix<R: Rng>(
    input: &Basis,
    output: &Basis,
    exponents: SobolevExponents,
    delta: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let raw = DMatrix::from_fn(output.len(), input.len(), |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let probe = DtnMatrix { matrix: raw, input: input.clone(), output: output.clone(), exponents };
    let norm = operator_norm(&probe);
    if norm == 0.0 || delta == 0.0 {
        return DMatrix::zeros(output.len(), input.len());
    }
    probe.matrix * Complex64::new(delta / norm, 0.0)
}

/// `Λ g + synth(E · proj(g))`: an oracle perturbed by a matrix in a basis pair.
pub struct NoisyDtn<'a> {
    pub inner: &'a dyn DtnOracle,
    pub input: Basis,
    pub output: Basis,
    pub noise: DMatrix<Complex64>,
}

impl DtnOracle for NoisyDtn<'_> {
    fn grid(&self) -> &Grid {
        self.inner.grid()
    }

    fn apply(&self, g: &BoundaryField, u0: Option<&[Complex64]>) -> Result<BoundaryField> {
        let clean = self.inner.apply(g, u0)?;
        let c = nalgebra::DVector::from_vec(self.input.project(g, u0)?);
        let e = &self.noise * c;
        let (pert, _) = self.output.synthesize(e.as_slice())?;
        clean.axpy(Complex64::new(1.0, 0.0), &pert)
    }
}

/// Header of the binary matrix format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub grid: GridDescriptor,
    pub input: BasisDescriptor,
    pub output: BasisDescriptor,
    pub exponents: SobolevExponents,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub n: usize,
    pub nx: usize,
    pub nt: usize,
    pub t_final: f64,
}

impl GridDescriptor {
    pub fn of(grid: &Grid) -> Self {
        GridDescriptor { n: grid.dim(), nx: grid.nx(), nt: grid.nt(), t_final: grid.t_final() }
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n, self.nx, self.nt, self.t_final)
    }
}

pub const MATRIX_MAGIC: &[u8; 8] = b"HPDTNMAT";

/// Layout: magic, header length as u64 LE, UTF-8 JSON header, then
/// `rows × cols` row-major entries as `(re, im)` f64 LE pairs.
pub fn write_dtn_matrix<W: Write>(m: &DtnMatrix, mut w: W) -> Result<()> {
    let header = MatrixHeader {
        rows: m.rows(),
        cols: m.cols(),
        grid: GridDescriptor::of(m.input.grid()),
        input: m.input.descriptor().clone(),
        output: m.output.descriptor().clone(),
        exponents: m.exponents,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.matrix[(i, j)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dtn_matrix<R: Read>(mut r: R) -> Result<DtnMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: MatrixHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    let grid = header.grid.build()?;
    let rebuild = |d: &BasisDescriptor| -> Result<Basis> {
        let b = Basis::on_faces(&grid, d.spec, d.faces.clone())?;
        if b.descriptor() != d {
            return Err(Error::Format("basis descriptor is inconsistent with its spec".into()));
        }
        Ok(b)
    };
    let input = rebuild(&header.input)?;
    let output = rebuild(&header.output)?;
    if input.len() != header.cols || output.len() != header.rows {
        return Err(Error::Format("matrix dimensions disagree with the bases".into()));
    }
    let mut buf = [0u8; 8];
    let mut next = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    let mut matrix = DMatrix::zeros(header.rows, header.cols);
    for i in 0..header.rows {
        for j in 0..header.cols {
            let re = next(&mut r)?;
            let im = next(&mut r)?;
            matrix[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(DtnMatrix { matrix, input, output, exponents: header.exponents })
}

/// Smooth boundary data compatible with zero initial values: `sin²(πt/T)·(a + b t)` per node.
pub fn smooth_boundary_data<R: Rng>(grid: &Grid, rng: &mut R) -> BoundaryField {
    let coeffs: Vec<(f64, f64, f64)> = (0..grid.face_count())
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)))
        .collect();
    let t_final = grid.t_final();
    BoundaryField::from_fn(grid, |node, _, t| {
        let (a, b, k) = coeffs[node.face];
        let bump = (PI * t / t_final).sin().powi(2);
        let along = if grid.dim() == 1 { 1.0 } else { (PI * node.along * k).cos() };
        Complex64::new(bump * (a + b * t / t_final) * along, 0.0)
    })
}

/// Random smooth potential with `sup|q| ≤ m`.
pub fn smooth_potential<R: Rng>(grid: &Grid, m: f64, rng: &mut R) -> Result<Potential> {
    let terms: Vec<(f64, [f64; 2], f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)],
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..PI),
            )
        })
        .collect();
    let raw = ScalarField::from_real_fn(grid, |x, t| {
        terms
            .iter()
            .map(|(a, k, w, ph)| a * (k[0] * x[0] + k[1] * x[1] + w * t / grid.t_final() + ph).cos())
            .sum()
    })
    .real_part();
    let sup = raw.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let scale = if sup > 0.0 { m / sup } else { 0.0 };
    Potential::new(grid, raw.iter().map(|v| v * scale).collect(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{direction_mask, Sign};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let q = Potential::from_fn(&g, |x, t| x[0] * t).unwrap();
        let out = dtn_apply(&Scheme::default(), &q, &BoundaryField::zeros(&g), None).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn manufactured_extended_map() {
        let g = Grid::new(1, 33, 33, 1.0).unwrap();
        let exact = ScalarField::from_real_fn(&g, |x, t| t + 0.5 * x[0] * x[0]);
        let b = BoundaryField::trace_of(&exact);
        let out = dtn_apply(&Scheme::default(), &Potential::zero(&g), &b, Some(exact.slice(0))).unwrap();
        for k in 0..g.nt() {
            assert!(out.get(0, k).norm() < 1e-10);
            assert!((out.get(1, k) - one()).norm() < 1e-10);
        }
    }

    #[test]
    fn partial_map_on_interval() {
        let g = Grid::new(1, 17, 17, 1.0).unwrap();
        let scheme = Scheme::default();
        let q = Potential::from_fn(&g, |x, _| 0.3 * x[0]).unwrap();
        let support = direction_mask(&g, &[-1.0], 0.0, Sign::Plus).unwrap();
        let obs = direction_mask(&g, &[1.0], 0.0, Sign::Plus).unwrap();
        let data = BoundaryField::from_fn(&g, |node, _, t| {
            Complex64::new(if node.face == 0 { (PI * t).sin() } else { 0.0 }, 0.0)
        });
        let full = dtn_apply(&scheme, &q, &data, None).unwrap();
        let part = partial_dtn_apply(&scheme, &q, &data, &support, &obs).unwrap();
        for k in 0..g.nt() {
            assert_eq!(part.get(0, k), Complex64::new(0.0, 0.0));
            assert_eq!(part.get(1, k), full.get(1, k));
        }
        let everywhere = DirectionMask::full(&g);
        assert_eq!(partial_dtn_apply(&scheme, &q, &data, &support, &everywhere).unwrap(), full);
        let none = DirectionMask::empty(&g);
        assert_eq!(partial_dtn_apply(&scheme, &q, &data, &support, &none).unwrap().max_abs(), 0.0);
        assert!(partial_dtn_apply(&scheme, &q, &data, &obs, &obs).is_err());
    }

    #[test]
    fn pairing_degenerate_cases() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = smooth_potential(&g, 1.0, &mut rng).unwrap();
        let b = smooth_boundary_data(&g, &mut rng);
        let s = Scheme::default();
        assert_eq!(pairing(&s, &q, &q, &b, &b).unwrap(), Complex64::new(0.0, 0.0));
        let z = BoundaryField::zeros(&g);
        let q0 = Potential::zero(&g);
        assert_eq!(pairing(&s, &q, &q0, &z, &b).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(pairing(&s, &q, &q0, &b, &z).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pairing_matches_volume_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::new(1, 65, 65, 1.0).unwrap();
        let q = Potential::from_fn(&g, |x, t| 0.5 * (PI * x[0]).sin() * (PI * t).sin()).unwrap();
        let q0 = Potential::zero(&g);
        let gd = smooth_boundary_data(&g, &mut rng);
        let hd = smooth_boundary_data(&g, &mut rng);
        let s = Scheme::default();
        let lhs = pairing(&s, &q, &q0, &gd, &hd).unwrap();
        let rhs = pairing_volume(&s, &q, &q0, &gd, &hd).unwrap();
        assert!((lhs - rhs).norm() / rhs.norm() < 0.05, "{lhs} vs {rhs}");
    }

    #[test]
    fn basis_is_orthonormal() {
        for (n, spec) in [
            (1, BasisSpec { space_modes: 1, time_modes: 5, initial_modes: 3 }),
            (2, BasisSpec { space_modes: 3, time_modes: 3, initial_modes: 2 }),
        ] {
            let g = Grid::new(n, 9, 9, 1.5).unwrap();
            let basis = Basis::new(&g, spec).unwrap();
            for i in 0..basis.len() {
                let mut e = vec![Complex64::new(0.0, 0.0); basis.len()];
                e[i] = one();
                let (b, u0) = basis.synthesize(&e).unwrap();
                let c = basis.project(&b, u0.as_deref()).unwrap();
                for (j, v) in c.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).norm() < 1e-12, "n={n} i={i} j={j} {v}");
                }
            }
        }
    }

    #[test]
    fn single_column_matrix() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let spec = BasisSpec { space_modes: 1, time_modes: 1, initial_modes: 0 };
        let input = Basis::on_faces(&g, spec, vec![0]).unwrap();
        let oracle = SimulatedDtn::new(Scheme::default(), Potential::zero(&g));
        let m = assemble_dtn_matrix(&oracle, &input, &input, None, SobolevExponents::unit()).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        let (b, _) = input.synthesize(&[one()]).unwrap();
        let expect = input.project(&oracle.apply(&b, None).unwrap(), None).unwrap()[0];
        assert_eq!(m.matrix[(0, 0)], expect);
    }

    #[test]
    fn difference_is_linear_and_reflection_symmetric() {
        let g = Grid::new(1, 17, 17, 1.0).unwrap();
        let spec = BasisSpec { space_modes: 1, time_modes: 4, initial_modes: 0 };
        let basis = Basis::new(&g, spec).unwrap();
        let q = Potential::from_fn(&g, |x, t| (PI * x[0]).sin() * (1.0 + t)).unwrap();
        let e = SobolevExponents::dtn_difference();
        let a = assemble_dtn_matrix(&SimulatedDtn::new(Scheme::default(), q), &basis, &basis, None, e).unwrap();
        let b = assemble_dtn_matrix(&SimulatedDtn::new(Scheme::default(), Potential::zero(&g)), &basis, &basis, None, e)
            .unwrap();
        let d = a.difference(&b).unwrap();
        assert_eq!(d.matrix, &a.matrix - &b.matrix);
        // reflection x ↦ 1−x swaps the two faces, i.e. the two blocks of 4
        let nm = 4;
        for i in 0..2 * nm {
            for j in 0..2 * nm {
                let (ri, rj) = ((i + nm) % (2 * nm), (j + nm) % (2 * nm));
                assert!((a.matrix[(i, j)] - a.matrix[(ri, rj)]).norm() < 1e-10);
            }
        }
        let sv = d.weighted_singular_values();
        assert!(sv.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn operator_norm_closed_forms() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let spec = BasisSpec { space_modes: 1, time_modes: 3, initial_modes: 0 };
        let basis = Basis::on_faces(&g, spec, vec![0]).unwrap();
        let mk = |m: DMatrix<Complex64>, e| DtnMatrix { matrix: m, input: basis.clone(), output: basis.clone(), exponents: e };
        let id = mk(DMatrix::identity(3, 3), SobolevExponents::unit());
        assert!((operator_norm(&id) - 1.0).abs() < 1e-12);
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.0, 2.0];
        let r1 = mk(DMatrix::from_fn(3, 3, |i, j| Complex64::new(u[i] * v[j], 0.0)), SobolevExponents::unit());
        let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((operator_norm(&r1) - nu * nv).abs() < 1e-12);
        let e = SobolevExponents::dtn_difference();
        let d = [3.0, -1.0, 0.25];
        let dm = mk(DMatrix::from_fn(3, 3, |i, j| Complex64::new(if i == j { d[i] } else { 0.0 }, 0.0)), e);
        let wi = boundary_sobolev_weights(&basis, e.r_in, e.s_in);
        let wo = boundary_sobolev_weights(&basis, e.r_out, e.s_out);
        let expect = (0..3).map(|k| (wo[k] * d[k] / wi[k]).abs()).fold(0.0, f64::max);
        assert!((operator_norm(&dm) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn noise_has_requested_norm() {
        let g = Grid::new(1, 9, 9, 1.0).unwrap();
        let basis = Basis::new(&g, BasisSpec { space_modes: 1, time_modes: 3, initial_modes: 0 }).unwrap();
        let e = SobolevExponents::dtn_difference();
        let n = noise_matrix(&basis, &basis, e, 0.125, &mut ChaCha8Rng::seed_from_u64(5));
        let m = DtnMatrix { matrix: n, input: basis.clone(), output: basis, exponents: e };
        assert!((operator_norm(&m) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let g = Grid::new(2, 7, 7, 1.0).unwrap();
        let basis = Basis::new(&g, BasisSpec { space_modes: 2, time_modes: 2, initial_modes: 0 }).unwrap();
        let m = DtnMatrix {
            matrix: DMatrix::from_fn(basis.len(), basis.len(), |i, j| Complex64::new(i as f64 * 0.1, -(j as f64))),
            input: basis.clone(),
            output: basis,
            exponents: SobolevExponents::dtn_difference(),
        };
        let mut buf = vec![];
        write_dtn_matrix(&m, &mut buf).unwrap();
        assert_eq!(read_dtn_matrix(buf.as_slice()).unwrap(), m);
        buf[0] = b'X';
        assert!(read_dtn_matrix(buf.as_slice()).is_err());
    }
}
