//! Reconstruction of anisotropic conductivities from boundary measurements.
//!
//! The pipeline runs
//! `Λσ̂ → ψ̂|∂X → F|∂X → ∂Y → Y → σ`:
//! a Dirichlet-to-Neumann matrix is turned into complex geometrical optics
//! traces, whose logarithms give the boundary values of the isothermal map
//! `F`. The image curve determines the region `Y`, on which the isotropic
//! conductivity is fitted to the transported DtN data.
//!
//! Conventions used throughout:
//! * `∂ = ½(∂x − i∂y)`, `∂̄ = ½(∂x + i∂y)`;
//! * DtN matrices map nodal Dirichlet values to the flux density
//!   `(σ∇u)·ν` per unit arclength;
//! * a conductivity is stored as `(s11, s12, s22)`.

pub mod beltrami;
pub mod cgo;
pub mod curve;
mod error;
pub mod fields;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod phantom;
pub mod pipeline;
pub mod sigma;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use cgo::{BoundaryMap, CgoTrace, SpectralParameterSet};
pub use curve::{CurveBoundarySample, ReconstructedSheet, SurfaceCloud};
pub use sigma::{ScatteringSample, SigmaReconstruction};
pub use fields::{
    BeltramiField, ComplexCoefficients, ConductivityField, Diffeomorphism, Domain, Grid2D,
};
pub use beltrami::{PrincipalSolution, SpectralGrid};
pub use forward::{BoundaryDiscretization, DtnMatrix};

