//! Space-time grid on `Q = (0,1)^n x (0,T)` and boundary geometry.
//!
//! Spatial nodes are numbered with the first axis fastest; space-time
//! values are stored time-major, so each time slice is contiguous.
//!
//! Boundary faces are numbered `0: x1=0, 1: x1=1, 2: x2=0, 3: x2=1`. A box
//! corner belongs to the lowest-numbered face containing it, so every point
//! of the boundary appears exactly once in [`Grid::boundary_nodes`].

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orientation `ε = ±` used for time direction, masks and CGO probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// One point of the spatial boundary `Γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    /// Spatial node index.
    pub spatial: usize,
    /// Owning face.
    pub face: usize,
    /// Integer coordinates `(i, j)`; `j = 0` in one dimension.
    pub coords: [usize; 2],
    /// Arc-length position along the owning face, in `[0, 1]`.
    pub along: f64,
    /// Surface quadrature weight (trapezoidal on every face).
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Grid {
    n: usize,
    nx: usize,
    nt: usize,
    t_final: f64,
    hx: f64,
    ht: f64,
    nodes: Arc<[BoundaryNode]>,
    node_of: Arc<[Option<usize>]>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.nx == other.nx && self.nt == other.nt && self.t_final == other.t_final
    }
}

impl Grid {
    pub fn new(n: usize, nx: usize, nt: usize, t_final: f64) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {n}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        if nx < 3 || nt < 3 {
            return Err(Error::InvalidGrid(format!("need nx >= 3 and nt >= 3, got nx={nx}, nt={nt}")));
        }
        let hx = 1.0 / (nx - 1) as f64;
        let ht = t_final / (nt - 1) as f64;
        let nspace = nx.pow(n as u32);
        let mut nodes = Vec::new();
        if n == 1 {
            for (face, i) in [(0, 0), (1, nx - 1)] {
                nodes.push(BoundaryNode { spatial: i, face, coords: [i, 0], along: 0.0, weight: 1.0 });
            }
        } else {
            let last = nx - 1;
            for (face, i) in [(0, 0), (1, last)] {
                for j in 0..nx {
                    nodes.push(BoundaryNode {
                        spatial: i + nx * j,
                        face,
                        coords: [i, j],
                        along: j as f64 * hx,
                        weight: hx,
                    });
                }
            }
            for (face, j) in [(2, 0), (3, last)] {
                for i in 1..last {
                    nodes.push(BoundaryNode {
                        spatial: i + nx * j,
                        face,
                        coords: [i, j],
                        along: i as f64 * hx,
                        weight: hx,
                    });
                }
            }
        }
        let mut node_of = vec![None; nspace];
        for (b, node) in nodes.iter().enumerate() {
            node_of[node.spatial] = Some(b);
        }
        Ok(Grid {
            n,
            nx,
            nt,
            t_final,
            hx,
            ht,
            nodes: nodes.into(),
            node_of: node_of.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    /// Number of spatial nodes, `nx^n`.
    pub fn nspace(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    /// Number of space-time nodes, `nx^n * nt`.
    pub fn len(&self) -> usize {
        self.nspace() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, s: usize, k: usize) -> usize {
        k * self.nspace() + s
    }

    #[inline]
    pub fn spatial_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn spatial_coords(&self, s: usize) -> [usize; 2] {
        if self.n == 1 {
            [s, 0]
        } else {
            [s % self.nx, s / self.nx]
        }
    }

    /// Physical position of a spatial node; the second component is 0 when `n = 1`.
    #[inline]
    pub fn position(&self, s: usize) -> [f64; 2] {
        let [i, j] = self.spatial_coords(s);
        if self.n == 1 {
            [i as f64 * self.hx, 0.0]
        } else {
            [i as f64 * self.hx, j as f64 * self.hx]
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.nt {
            self.t_final
        } else {
            k as f64 * self.ht
        }
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn boundary_len(&self) -> usize {
        self.nodes.len()
    }

    /// Boundary node owning spatial node `s`, if `s` lies on `Γ`.
    pub fn boundary_index(&self, s: usize) -> Option<usize> {
        self.node_of[s]
    }

    pub fn is_boundary(&self, s: usize) -> bool {
        self.node_of[s].is_some()
    }

    pub fn face_count(&self) -> usize {
        2 * self.n
    }

    /// Outward unit normal of a face.
    pub fn face_normal(&self, face: usize) -> [f64; 2] {
        let mut nu = [0.0; 2];
        nu[face / 2] = if face.is_multiple_of(2) { -1.0 } else { 1.0 };
        nu
    }

    /// Geometric number of grid points on a face, shared corners included.
    pub fn face_len(&self, face: usize) -> usize {
        debug_assert!(face < self.face_count());
        if self.n == 1 {
            1
        } else {
            self.nx
        }
    }

    /// Outward normal at a boundary node (the owning face's normal).
    pub fn normal(&self, b: usize) -> [f64; 2] {
        self.face_normal(self.nodes[b].face)
    }

    /// Spatial nodes strictly inside `Ω`, in solver ordering.
    pub fn interior(&self) -> Vec<usize> {
        let m = self.nx - 1;
        if self.n == 1 {
            (1..m).collect()
        } else {
            (1..m).flat_map(|j| (1..m).map(move |i| i + self.nx * j)).collect()
        }
    }

    pub fn interior_len(&self) -> usize {
        (self.nx - 2).pow(self.n as u32)
    }

    /// Trapezoidal weight in time.
    #[inline]
    pub fn time_weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.nt {
            0.5 * self.ht
        } else {
            self.ht
        }
    }

    /// Trapezoidal weight in space (tensor product over axes).
    #[inline]
    pub fn space_weight(&self, s: usize) -> f64 {
        let [i, j] = self.spatial_coords(s);
        let w = |i: usize| if i == 0 || i + 1 == self.nx { 0.5 * self.hx } else { self.hx };
        if self.n == 1 {
            w(i)
        } else {
            w(i) * w(j)
        }
    }

    /// `sup |x|` over the closed unit box.
    pub fn radius(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `|Q| = T` for the unit box.
    pub fn volume(&self) -> f64 {
        self.t_final
    }

    /// Boundary nodes adjacent along `Γ` (grid distance one).
    pub fn boundary_neighbors(&self, b: usize) -> Vec<usize> {
        let [i, j] = self.nodes[b].coords;
        let mut out = Vec::new();
        if self.n == 1 {
            return out;
        }
        let last = self.nx - 1;
        let cands = [
            (i.checked_sub(1), Some(j)),
            ((i < last).then_some(i + 1), Some(j)),
            (Some(i), j.checked_sub(1)),
            (Some(i), (j < last).then_some(j + 1)),
        ];
        for c in cands {
            if let (Some(a), Some(bb)) = c {
                if let Some(nb) = self.node_of[self.spatial_index(a, bb)] {
                    out.push(nb);
                }
            }
        }
        out
    }

    pub(crate) fn check_same(&self, other: &Grid, what: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(what))
        }
    }
}

/// Indicator of a subset of `Γ`, constant in time along `Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionMask {
    omega: Vec<f64>,
    delta: f64,
    sign: Sign,
    fatten: usize,
    inside: Vec<bool>,
}

impl DirectionMask {
    /// `{x in Γ : sign * ν(x)·ω > δ}`.
    pub fn new(grid: &Grid, omega: &[f64], delta: f64, sign: Sign) -> Result<Self> {
        check_unit(grid, omega)?;
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("mask threshold must lie in [0,1), got {delta}")));
        }
        let inside = (0..grid.boundary_len())
            .map(|b| {
                let nu = grid.normal(b);
                let dot: f64 = omega.iter().zip(nu.iter()).map(|(a, b)| a * b).sum();
                sign.value() * dot > delta
            })
            .collect();
        Ok(DirectionMask { omega: omega.to_vec(), delta, sign, fatten: 0, inside })
    }

    /// Every boundary node.
    pub fn full(grid: &Grid) -> Self {
        DirectionMask {
            omega: vec![],
            delta: 0.0,
            sign: Sign::Plus,
            fatten: 0,
            inside: vec![true; grid.boundary_len()],
        }
    }

    pub fn empty(grid: &Grid) -> Self {
        DirectionMask {
            omega: vec![],
            delta: 0.0,
            sign: Sign::Plus,
            fatten: 0,
            inside: vec![false; grid.boundary_len()],
        }
    }

    pub fn complement(&self) -> Self {
        DirectionMask {
            inside: self.inside.iter().map(|v| !v).collect(),
            sign: self.sign.flip(),
            ..self.clone()
        }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn fatten(&self) -> usize {
        self.fatten
    }

    #[inline]
    pub fn contains(&self, b: usize) -> bool {
        self.inside[b]
    }

    /// Membership of `(x_b, t_k)`; masks do not depend on time.
    #[inline]
    pub fn contains_at(&self, b: usize, _k: usize) -> bool {
        self.inside[b]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside.iter().enumerate().filter(|(_, &v)| v).map(|(b, _)| b)
    }

    pub fn is_subset_of(&self, other: &DirectionMask) -> bool {
        self.inside.iter().zip(&other.inside).all(|(&a, &b)| !a || b)
    }

    /// Smooth cutoff: 1 on the mask, a one-cell cosine taper on the
    /// neighbouring ring along `Γ`, 0 elsewhere.
    pub fn taper(&self, grid: &Grid) -> Vec<f64> {
        let mut w: Vec<f64> = self.inside.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        for b in self.indices() {
            for nb in grid.boundary_neighbors(b) {
                if !self.inside[nb] {
                    w[nb] = 0.5 * (1.0 + (std::f64::consts::PI * 0.5).cos());
                }
            }
        }
        w
    }
}

/// Builds the mask `Γ_{sign, ω, δ}`.
pub fn direction_mask(grid: &Grid, omega: &[f64], delta: f64, sign: Sign) -> Result<DirectionMask> {
    DirectionMask::new(grid, omega, delta, sign)
}

/// Grows a mask by `fatten` rings of boundary neighbours.
pub fn neighborhood_mask(grid: &Grid, base: &DirectionMask, fatten: usize) -> DirectionMask {
    let mut out = base.clone();
    out.fatten = base.fatten + fatten;
    if fatten == 0 {
        return out;
    }
    let mut dist = vec![usize::MAX; base.len()];
    let mut queue = VecDeque::new();
    for b in base.indices() {
        dist[b] = 0;
        queue.push_back(b);
    }
    while let Some(b) = queue.pop_front() {
        if dist[b] == fatten {
            continue;
        }
        for nb in grid.boundary_neighbors(b) {
            if dist[nb] == usize::MAX {
                dist[nb] = dist[b] + 1;
                out.inside[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    out
}

pub(crate) fn check_unit(grid: &Grid, omega: &[f64]) -> Result<()> {
    if omega.len() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction has {} components, grid dimension is {}",
            omega.len(),
            grid.dim()
        )));
    }
    let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction is not a unit vector (|ω| = {norm})")));
    }
    Ok(())
}
