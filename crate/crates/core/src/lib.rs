//! Recovery of a time-dependent potential in a parabolic equation from
//! Dirichlet-to-Neumann data.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod banded;
pub mod carleman;
pub mod cgo;
pub mod dtn;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod norms;
pub mod reconstruct;
pub mod semilinear;
pub mod stats;

pub use error::{Error, Result};
pub use field::{BoundaryField, Potential, ScalarField};
pub use forward::{neumann_trace, LinearProblem, NewtonOptions, Scheme, SemilinearSolution};
pub use grid::{direction_mask, neighborhood_mask, BoundaryNode, DirectionMask, Grid, Sign};
pub use semilinear::{dtn_semilinear, frechet_dtn, linearized_potential, recover_nonlinearity, FrechetDtn, Nonlinearity, RecoveryConfig, RecoveryTable};
pub use dtn::{
    assemble_dtn_matrix, dtn_apply, operator_norm, pairing, pairing_volume, partial_dtn_apply, Basis, BasisSpec,
    DtnMatrix, DtnOracle, SimulatedDtn,
};
pub use norms::{hminus1_norm, modulus_eval, ModulusFamily, ModulusParams, SobolevExponents, Torus};
pub use cgo::{build_cgo, CgoParams, CgoSolution};
pub use carleman::{carleman_ratio, conjugated_apply, poincare_ratio, CarlemanReport, OperatorKind};
pub use reconstruct::{choose_omega, fourier_slice, reconstruct, select_parameters, DataMode, FrequencyGrid, ProbeMode, ReconstructionConfig, StabilityRecord};
