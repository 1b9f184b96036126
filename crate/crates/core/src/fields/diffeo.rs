use num_complex::Complex64;

use super::{ConductivityField, Grid2D};
use crate::{Error, Result};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX: usize = 50;

/// Sampled orientation-preserving map with its Jacobian
/// `[∂Φx/∂x, ∂Φx/∂y, ∂Φy/∂x, ∂Φy/∂y]` per cell.
#[derive(Clone, Debug)]
pub struct Diffeomorphism {
    pub grid: Grid2D,
    pub phi: Vec<Complex64>,
    pub jac: Vec<[f64; 4]>,
}

impl Diffeomorphism {
    /// Samples an analytic map and its Jacobian at cell centres.
    pub fn from_map(
        grid: &Grid2D,
        f: impl Fn(Complex64) -> Complex64,
        jac: impl Fn(Complex64) -> [f64; 4],
    ) -> Result<Self> {
        let c = grid.centers();
        let d = Diffeomorphism {
            grid: grid.clone(),
            phi: c.iter().map(|&z| f(z)).collect(),
            jac: c.iter().map(|&z| jac(z)).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Holomorphic map `f` with derivative `df`.
    pub fn conformal(
        grid: &Grid2D,
        f: impl Fn(Complex64) -> Complex64,
        df: impl Fn(Complex64) -> Complex64,
    ) -> Result<Self> {
        Self::from_map(grid, f, |z| {
            let d = df(z);
            [d.re, -d.im, d.im, d.re]
        })
    }

    /// Jacobian by centred differences, one-sided where a neighbour leaves the mask.
    pub fn from_samples(grid: &Grid2D, phi: Vec<Complex64>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::Validation("map size does not match grid".into()));
        }
        let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
        let ok = |i: usize, j: usize, k0: usize| -> bool {
            i < nx && j < ny && (grid.in_mask(grid.index(i, j)) == grid.in_mask(k0))
        };
        let mut jac = vec![[0.0; 4]; grid.len()];
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.index(i, j);
                let dx = diff(&phi, grid, k, (i, j), true, h, &ok);
                let dy = diff(&phi, grid, k, (i, j), false, h, &ok);
                jac[k] = [dx.re, dy.re, dx.im, dy.im];
            }
        }
        let d = Diffeomorphism { grid: grid.clone(), phi, jac };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, j) in self.jac.iter().enumerate() {
            if !(j[0] * j[3] - j[1] * j[2] > 0.0) {
                return Err(Error::Validation(format!("map is not orientation-preserving at cell {k}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let ws = self.grid.interp_weights(z)?;
        Some(ws.iter().map(|&(k, w)| self.phi[k] * w).sum())
    }

    pub fn jacobian(&self, z: Complex64) -> Option<[f64; 4]> {
        let ws = self.grid.interp_weights(z)?;
        let mut out = [0.0; 4];
        for (k, w) in ws {
            for a in 0..4 {
                out[a] += w * self.jac[k][a];
            }
        }
        Some(out)
    }

    /// Newton solve of `Φ(z) = w` starting at `seed`.
    pub fn inverse_from(&self, w: Complex64, seed: Complex64) -> Result<Complex64> {
        let fail = || Error::NonInvertible { point: format!("{w}") };
        let mut z = seed;
        for _ in 0..NEWTON_MAX {
            let r = self.eval(z).ok_or_else(fail)? - w;
            if r.norm() <= NEWTON_TOL {
                return Ok(z);
            }
            let j = self.jacobian(z).ok_or_else(fail)?;
            let det = j[0] * j[3] - j[1] * j[2];
            if det.abs() < 1e-300 {
                return Err(fail());
            }
            let dx = (j[3] * r.re - j[1] * r.im) / det;
            let dy = (-j[2] * r.re + j[0] * r.im) / det;
            z -= Complex64::new(dx, dy);
        }
        let r = self.eval(z).ok_or_else(fail)? - w;
        if r.norm() <= NEWTON_TOL * 1e2 {
            Ok(z)
        } else {
            Err(fail())
        }
    }

    /// Newton seeded at the cell whose sample is closest to `w`.
    pub fn inverse(&self, w: Complex64) -> Result<Complex64> {
        let k = (0..self.phi.len())
            .min_by(|&a, &b| (self.phi[a] - w).norm().total_cmp(&(self.phi[b] - w).norm()))
            .ok_or(Error::NonInvertible { point: format!("{w}") })?;
        self.inverse_from(w, self.grid.center_of(k))
    }

    /// Pre-images of many points, seeding each solve with the previous result.
    pub fn inverse_many(&self, ws: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(ws.len());
        let mut seed: Option<Complex64> = None;
        for &w in ws {
            let z = match seed.map(|s| self.inverse_from(w, s)) {
                Some(Ok(z)) => z,
                _ => self.inverse(w)?,
            };
            seed = Some(z);
            out.push(z);
        }
        Ok(out)
    }
}

fn diff(
    phi: &[Complex64],
    grid: &Grid2D,
    k: usize,
    (i, j): (usize, usize),
    along_x: bool,
    h: f64,
    ok: &impl Fn(usize, usize, usize) -> bool,
) -> Complex64 {
    let (prev, next) = if along_x {
        ((i.wrapping_sub(1), j), (i + 1, j))
    } else {
        ((i, j.wrapping_sub(1)), (i, j + 1))
    };
    let has_p = ok(prev.0, prev.1, k);
    let has_n = ok(next.0, next.1, k);
    let at = |p: (usize, usize)| phi[grid.index(p.0, p.1)];
    match (has_p, has_n) {
        (true, true) => (at(next) - at(prev)) / (2.0 * h),
        (false, true) => (at(next) - phi[k]) / h,
        (true, false) => (phi[k] - at(prev)) / h,
        (false, false) => Complex64::new(if along_x { 1.0 } else { 0.0 }, if along_x { 0.0 } else { 1.0 }),
    }
}

/// `J σ Jᵀ / |det J|` for `J = DΦ`.
pub fn push_tensor(t: [f64; 3], j: [f64; 4]) -> [f64; 3] {
    let [a, b, c] = t;
    let det = (j[0] * j[3] - j[1] * j[2]).abs();
    // rows of J: (j0, j1), (j2, j3)
    let s00 = j[0] * (a * j[0] + b * j[1]) + j[1] * (b * j[0] + c * j[1]);
    let s01 = j[0] * (a * j[2] + b * j[3]) + j[1] * (b * j[2] + c * j[3]);
    let s11 = j[2] * (a * j[2] + b * j[3]) + j[3] * (b * j[2] + c * j[3]);
    [s00 / det, s01 / det, s11 / det]
}

/// Push-forward values at the source cells, before any resampling.
pub fn push_forward_at_source(s: &ConductivityField, phi: &Diffeomorphism) -> Vec<[f64; 3]> {
    (0..s.grid.len()).map(|k| push_tensor(s.at(k), phi.jac[k])).collect()
}

/// `(Φ∗σ)(w) = [J σ Jᵀ/|det J|](Φ⁻¹(w))` on the cells of `target`.
pub fn push_forward(s: &ConductivityField, phi: &Diffeomorphism, target: &Grid2D) -> Result<ConductivityField> {
    let pre = phi.inverse_many(&target.centers())?;
    let mut out = ConductivityField::identity(target);
    for (k, z) in pre.into_iter().enumerate() {
        let j = phi.jacobian(z).ok_or(Error::NonInvertible { point: format!("{z}") })?;
        out.set(k, push_tensor(s.sample(z), j));
    }
    Ok(out)
}

/// `√det σ̂` at the given pre-image points.
pub fn isotropize_value(s: &ConductivityField, preimages: &[Complex64]) -> Result<Vec<f64>> {
    preimages
        .iter()
        .map(|&z| {
            if s.grid.interp_weights(z).is_none() {
                return Err(Error::NonInvertible { point: format!("{z}") });
            }
            let [a, b, c] = s.sample(z);
            Ok((a * c - b * b).max(0.0).sqrt())
        })
        .collect()
}
