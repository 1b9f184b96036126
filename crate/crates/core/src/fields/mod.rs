//! Grids, conductivity representations and coordinate changes.

mod conductivity;
mod diffeo;
mod grid;

pub use conductivity::{
    beltrami_of_conductivity, coeffs_of, complex_coeffs, metric_to_beltrami, mu_of_tensor,
    tensor_of, BeltramiField, ComplexCoefficients, ConductivityField, TensorField, SPD_TOL,
};
pub use diffeo::{
    isotropize_value, push_forward, push_forward_at_source, push_tensor, Diffeomorphism,
};
pub use grid::{resample_closed, Domain, Grid2D, GridSpec};
