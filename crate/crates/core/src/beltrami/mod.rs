//! Cauchy and Beurling transforms and the Beltrami equation on the plane.

mod solve;
mod spectral;

pub use solve::{isothermal_map, solve_beltrami, solve_on, BeltramiOptions, IsothermalMap, PrincipalSolution};
pub use spectral::SpectralGrid;
