//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use heatprobe_core::{BoundaryField, Grid, Potential};
use num_complex::Complex64;

pub fn grid(n: usize, nx: usize, nt: usize) -> Grid {
    Grid::new(n, nx, nt, 1.0).expect("benchmark grid")
}

pub fn potential(grid: &Grid) -> Potential {
    Potential::from_fn(grid, |x, t| 0.5 * (PI * x[0]).sin() * (1.0 + x[1]) * (PI * t).sin()).expect("bounded potential")
}

/// `sin²(πt)` on every boundary node.
pub fn bump(grid: &Grid) -> BoundaryField {
    BoundaryField::from_fn(grid, |_, _, t| Complex64::new((PI * t).sin().powi(2), 0.0))
}
