//! Named conductivities on the unit disk, all equal to the identity near the boundary.

use num_complex::Complex64;

use crate::fields::{push_tensor, TensorField};

/// C^∞ step: 1 for `r ≤ r0`, 0 for `r ≥ r1`.
pub fn smooth_step(r: f64, r0: f64, r1: f64) -> f64 {
    let t = (r - r0) / (r1 - r0);
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 / (1.0 + (1.0 / (1.0 - t) - 1.0 / t).exp())
    }
}

fn smooth_step_deriv(r: f64, r0: f64, r1: f64) -> f64 {
    let t = (r - r0) / (r1 - r0);
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let g = 1.0 / (1.0 - t) - 1.0 / t;
    let dg = 1.0 / ((1.0 - t) * (1.0 - t)) + 1.0 / (t * t);
    let e = g.exp();
    if !e.is_finite() {
        return 0.0;
    }
    -e * dg / ((1.0 + e) * (1.0 + e)) / (r1 - r0)
}

pub fn identity(_z: Complex64) -> [f64; 3] {
    [1.0, 0.0, 1.0]
}

/// `diag(4,1)` on the disk of radius 0.35, blending smoothly to the identity at 0.5.
pub fn aniso_disk(z: Complex64) -> [f64; 3] {
    let eta = smooth_step(z.norm(), 0.35, 0.5);
    [1.0 + 3.0 * eta, 0.0, 1.0]
}

/// Isotropic bump with peak 2 on the disk of radius 0.3, back to 1 at radius 0.6.
pub fn radial_bump(z: Complex64) -> [f64; 3] {
    let s = 1.0 + smooth_step(z.norm(), 0.3, 0.6);
    [s, 0.0, s]
}

/// Piecewise constant layers 3 / 2 / 1 with jumps at radii 0.2 and 0.4.
pub fn concentric_disks(z: Complex64) -> [f64; 3] {
    let r = z.norm();
    let s = if r < 0.2 {
        3.0
    } else if r < 0.4 {
        2.0
    } else {
        1.0
    };
    [s, 0.0, s]
}

/// Isotropic bump of peak 1.8 centred off-axis, unrelated to [`radial_bump`].
pub fn offset_bump(z: Complex64) -> [f64; 3] {
    let s = 1.0 + 0.8 * smooth_step((z - Complex64::new(0.25, -0.2)).norm(), 0.1, 0.4);
    [s, 0.0, s]
}

const SHEAR: f64 = 0.25;
const SHEAR_R0: f64 = 0.3;
const SHEAR_R1: f64 = 0.85;

/// Non-conformal diffeomorphism of the disk fixing a neighbourhood of the boundary:
/// `(x, y) ↦ (x + 0.25·β(r)·y, y)`.
pub fn shear_map(z: Complex64) -> Complex64 {
    z + SHEAR * smooth_step(z.norm(), SHEAR_R0, SHEAR_R1) * z.im
}

/// Jacobian of [`shear_map`], row-major.
pub fn shear_jacobian(z: Complex64) -> [f64; 4] {
    let r = z.norm();
    let b = smooth_step(r, SHEAR_R0, SHEAR_R1);
    let db = if r > 0.0 { smooth_step_deriv(r, SHEAR_R0, SHEAR_R1) / r } else { 0.0 };
    [1.0 + SHEAR * z.im * db * z.re, SHEAR * (b + z.im * db * z.im), 0.0, 1.0]
}

/// Newton inverse of [`shear_map`].
pub fn shear_inverse(w: Complex64) -> Complex64 {
    let mut z = w;
    for _ in 0..60 {
        let r = shear_map(z) - w;
        if r.norm() < 1e-15 {
            break;
        }
        let j = shear_jacobian(z);
        let det = j[0] * j[3] - j[1] * j[2];
        z -= Complex64::new((j[3] * r.re - j[1] * r.im) / det, (-j[2] * r.re + j[0] * r.im) / det);
    }
    z
}

/// `Φ∗(radial_bump)` for the boundary-fixing shear `Φ`; same DtN as [`radial_bump`].
pub fn sheared_bump(w: Complex64) -> [f64; 3] {
    let z = shear_inverse(w);
    push_tensor(radial_bump(z), shear_jacobian(z))
}

/// Alias of [`sheared_bump`], the gauge partner of [`radial_bump`].
pub fn gauge_partner(w: Complex64) -> [f64; 3] {
    sheared_bump(w)
}

/// Phantom selected by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phantom {
    Identity,
    AnisoDisk,
    RadialBump,
    ShearedBump,
    ConcentricDisks,
    OffsetBump,
}

impl Phantom {
    pub const NAMES: [&'static str; 6] =
        ["identity", "aniso_disk", "radial_bump", "sheared_bump", "concentric_disks", "offset_bump"];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => Phantom::Identity,
            "aniso_disk" => Phantom::AnisoDisk,
            "radial_bump" => Phantom::RadialBump,
            "sheared_bump" | "gauge_partner" => Phantom::ShearedBump,
            "concentric_disks" => Phantom::ConcentricDisks,
            "offset_bump" => Phantom::OffsetBump,
            _ => return None,
        })
    }

    /// Isotropic conductivity seen in isothermal coordinates, when known in closed form.
    pub fn isotropic_truth(&self) -> Option<fn(Complex64) -> f64> {
        match self {
            Phantom::Identity => Some(|_| 1.0),
            Phantom::RadialBump | Phantom::ShearedBump => Some(|z| radial_bump(z)[0]),
            Phantom::ConcentricDisks => Some(|z| concentric_disks(z)[0]),
            Phantom::OffsetBump => Some(|z| offset_bump(z)[0]),
            Phantom::AnisoDisk => None,
        }
    }
}

impl TensorField for Phantom {
    fn tensor(&self, z: Complex64) -> [f64; 3] {
        match self {
            Phantom::Identity => identity(z),
            Phantom::AnisoDisk => aniso_disk(z),
            Phantom::RadialBump => radial_bump(z),
            Phantom::ShearedBump => sheared_bump(z),
            Phantom::ConcentricDisks => concentric_disks(z),
            Phantom::OffsetBump => offset_bump(z),
        }
    }
}
