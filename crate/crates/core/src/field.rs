//! Grid functions on `Q̄` and on the lateral boundary `Σ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BoundaryNode, DirectionMask, Grid};

/// Complex samples on every space-time node, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Degenerate("field contains non-finite values".into()));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 2], f64) -> Complex64) -> Self {
        let ns = grid.nspace();
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for s in 0..ns {
                values.push(f(grid.position(s), t));
            }
        }
        ScalarField { grid: grid.clone(), values }
    }

    pub fn from_real_fn(grid: &Grid, mut f: impl FnMut([f64; 2], f64) -> f64) -> Self {
        Self::from_fn(grid, |x, t| Complex64::new(f(x, t), 0.0))
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, s: usize, k: usize) -> Complex64 {
        self.values[self.grid.index(s, k)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, k: usize, v: Complex64) {
        let i = self.grid.index(s, k);
        self.values[i] = v;
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let ns = self.grid.nspace();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [Complex64] {
        let ns = self.grid.nspace();
        &mut self.values[k * ns..(k + 1) * ns]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Bilinear integral `∫_Q f g` (no conjugation), trapezoidal in space and time.
    pub fn integrate_product(&self, other: &ScalarField) -> Result<Complex64> {
        self.grid.check_same(&other.grid, "integrand factors")?;
        Ok(self.weighted_sum(|i| self.values[i] * other.values[i]))
    }

    pub fn integrate(&self) -> Complex64 {
        self.weighted_sum(|i| self.values[i])
    }

    /// `‖f‖_{L²(Q)}` by trapezoidal quadrature.
    pub fn l2_norm(&self) -> f64 {
        self.weighted_sum(|i| Complex64::new(self.values[i].norm_sqr(), 0.0)).re.sqrt()
    }

    fn weighted_sum(&self, mut term: impl FnMut(usize) -> Complex64) -> Complex64 {
        let g = &self.grid;
        let ns = g.nspace();
        let sw: Vec<f64> = (0..ns).map(|s| g.space_weight(s)).collect();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..g.nt() {
            let mut slab = Complex64::new(0.0, 0.0);
            for (s, w) in sw.iter().enumerate() {
                slab += term(k * ns + s) * w;
            }
            total += slab * g.time_weight(k);
        }
        total
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        self.map(|v| v * a)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex64, other: &ScalarField) -> Result<Self> {
        self.grid.check_same(&other.grid, "summed fields")?;
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x + a * y).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        self.grid.check_same(&other.grid, "multiplied fields")?;
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x * y).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    /// `t ↦ T − t`.
    pub fn time_reversed(&self) -> Self {
        let nt = self.grid.nt();
        let mut out = Vec::with_capacity(self.values.len());
        for k in (0..nt).rev() {
            out.extend_from_slice(self.slice(k));
        }
        ScalarField { grid: self.grid.clone(), values: out }
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }
}

/// Complex samples on the lateral boundary `Σ = Γ × [0,T]`, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl BoundaryField {
    pub fn zeros(grid: &Grid) -> Self {
        BoundaryField {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.boundary_len() * grid.nt()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        let expected = grid.boundary_len() * grid.nt();
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "boundary field has {} values, expected {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Degenerate("boundary field contains non-finite values".into()));
        }
        Ok(BoundaryField { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&BoundaryNode, [f64; 2], f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.boundary_len() * grid.nt());
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for node in grid.boundary_nodes() {
                values.push(f(node, grid.position(node.spatial), t));
            }
        }
        BoundaryField { grid: grid.clone(), values }
    }

    /// Dirichlet trace of a space-time field on `Σ`.
    pub fn trace_of(u: &ScalarField) -> Self {
        let g = u.grid();
        let mut values = Vec::with_capacity(g.boundary_len() * g.nt());
        for k in 0..g.nt() {
            for node in g.boundary_nodes() {
                values.push(u.get(node.spatial, k));
            }
        }
        BoundaryField { grid: g.clone(), values }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.boundary_len() * grid.nt());
        BoundaryField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, b: usize, k: usize) -> Complex64 {
        self.values[k * self.grid.boundary_len() + b]
    }

    #[inline]
    pub fn set(&mut self, b: usize, k: usize, v: Complex64) {
        let nb = self.grid.boundary_len();
        self.values[k * nb + b] = v;
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let nb = self.grid.boundary_len();
        &self.values[k * nb..(k + 1) * nb]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Bilinear surface integral `∫_Σ f h dσ dt` (no conjugation).
    pub fn integrate_product(&self, other: &BoundaryField) -> Result<Complex64> {
        self.grid.check_same(&other.grid, "boundary integrand factors")?;
        Ok(self.weighted_sum(|i| self.values[i] * other.values[i]))
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_sum(|i| Complex64::new(self.values[i].norm_sqr(), 0.0)).re.sqrt()
    }

    fn weighted_sum(&self, mut term: impl FnMut(usize) -> Complex64) -> Complex64 {
        let g = &self.grid;
        let nb = g.boundary_len();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..g.nt() {
            let mut slab = Complex64::new(0.0, 0.0);
            for (b, node) in g.boundary_nodes().iter().enumerate() {
                slab += term(k * nb + b) * node.weight;
            }
            total += slab * g.time_weight(k);
        }
        total
    }

    /// Zeroes every value outside the mask.
    pub fn restricted(&self, mask: &DirectionMask) -> Self {
        let nb = self.grid.boundary_len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask.contains(i % nb) { v } else { Complex64::new(0.0, 0.0) })
            .collect();
        BoundaryField { grid: self.grid.clone(), values }
    }

    /// Largest magnitude outside the mask.
    pub fn max_abs_outside(&self, mask: &DirectionMask) -> f64 {
        let nb = self.grid.boundary_len();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask.contains(i % nb))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        BoundaryField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        self.map(|v| v * a)
    }

    pub fn axpy(&self, a: Complex64, other: &BoundaryField) -> Result<Self> {
        self.grid.check_same(&other.grid, "summed boundary fields")?;
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x + a * y).collect();
        Ok(BoundaryField { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &BoundaryField) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn time_reversed(&self) -> Self {
        let nt = self.grid.nt();
        let mut out = Vec::with_capacity(self.values.len());
        for k in (0..nt).rev() {
            out.extend_from_slice(self.slice(k));
        }
        BoundaryField { grid: self.grid.clone(), values: out }
    }
}

/// Real potential on `Q̄` with a sup-norm budget `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    grid: Grid,
    values: Vec<f64>,
    bound: f64,
}

impl Potential {
    pub fn zero(grid: &Grid) -> Self {
        Potential { grid: grid.clone(), values: vec![0.0; grid.len()], bound: 0.0 }
    }

    /// Rejects samples whose sup-norm exceeds `bound`.
    pub fn new(grid: &Grid, values: Vec<f64>, bound: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "potential has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("potential contains non-finite values".into()));
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > bound * (1.0 + 1e-12) + 1e-300 && sup > 0.0 {
            return Err(Error::InvalidArgument(format!("potential sup-norm {sup} exceeds bound {bound}")));
        }
        Ok(Potential { grid: grid.clone(), values, bound })
    }

    /// Bound set to the attained sup-norm.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self::new(grid, values, sup)
    }

    pub fn from_fn(grid: &Grid, f: impl FnMut([f64; 2], f64) -> f64) -> Result<Self> {
        Self::from_values(grid, ScalarField::from_real_fn(grid, f).real_part())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values[self.grid.index(s, k)]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let ns = self.grid.nspace();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_raw(&self.grid, self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// `self − other` as a complex field.
    pub fn difference(&self, other: &Potential) -> Result<ScalarField> {
        self.grid.check_same(&other.grid, "potentials")?;
        Ok(ScalarField::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| Complex64::new(a - b, 0.0)).collect(),
        ))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Potential {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * a).collect(),
            bound: self.bound * a.abs(),
        }
    }

    pub fn time_reversed(&self) -> Self {
        let nt = self.grid.nt();
        let mut out = Vec::with_capacity(self.values.len());
        for k in (0..nt).rev() {
            out.extend_from_slice(self.slice(k));
        }
        Potential { grid: self.grid.clone(), values: out, bound: self.bound }
    }
}
