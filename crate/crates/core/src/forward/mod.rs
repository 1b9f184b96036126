//! Forward conductivity problem and Dirichlet-to-Neumann operators.
//!
//! The region is triangulated by a boundary-fitted ring mesh and discretized with
//! P1 elements (a vertex-centred control-volume scheme). `Λ = W⁻¹S` with `S` the
//! Schur complement of the stiffness matrix on the boundary nodes and `W` the
//! arclength weights, so `WΛ` is exactly symmetric and annihilates constants.

pub mod boundary;
mod dtn;
mod fem;
mod mesh;

pub use boundary::BoundaryDiscretization;
pub use dtn::{
    annulus_blocks, dtn_assemble, dtn_glue, dtn_laplace, dtn_perturbation, dtn_transport,
    interface_dtn, solve_dirichlet, DirichletSolution, DtnMatrix, GlueBlocks, FLUX_DENSITY,
};
pub use fem::{Fem, Harmonic};
pub use mesh::{MeshOptions, RingMesh};
