use num_complex::Complex64;

use super::Grid2D;
use crate::{Error, Result};

/// Smallest admissible determinant of a conductivity tensor.
pub const SPD_TOL: f64 = 1e-12;

/// Anything that can be evaluated as a symmetric tensor `(s11, s12, s22)` at a point.
pub trait TensorField: Sync {
    fn tensor(&self, z: Complex64) -> [f64; 3];
}

impl<F> TensorField for F
where
    F: Fn(Complex64) -> [f64; 3] + Sync,
{
    fn tensor(&self, z: Complex64) -> [f64; 3] {
        self(z)
    }
}

/// Per-cell symmetric conductivity on a grid.
#[derive(Clone, Debug)]
pub struct ConductivityField {
    pub grid: Grid2D,
    pub s11: Vec<f64>,
    pub s12: Vec<f64>,
    pub s22: Vec<f64>,
}

impl ConductivityField {
    pub fn identity(grid: &Grid2D) -> Self {
        let n = grid.len();
        ConductivityField { grid: grid.clone(), s11: vec![1.0; n], s12: vec![0.0; n], s22: vec![1.0; n] }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(Complex64) -> [f64; 3]) -> Self {
        let n = grid.len();
        let mut out = Self::identity(grid);
        for k in 0..n {
            let [a, b, c] = f(grid.center_of(k));
            out.s11[k] = a;
            out.s12[k] = b;
            out.s22[k] = c;
        }
        out
    }

    pub fn isotropic(grid: &Grid2D, s: &[f64]) -> Self {
        assert_eq!(s.len(), grid.len());
        ConductivityField { grid: grid.clone(), s11: s.to_vec(), s12: vec![0.0; s.len()], s22: s.to_vec() }
    }

    pub fn at(&self, k: usize) -> [f64; 3] {
        [self.s11[k], self.s12[k], self.s22[k]]
    }

    pub fn set(&mut self, k: usize, t: [f64; 3]) {
        self.s11[k] = t[0];
        self.s12[k] = t[1];
        self.s22[k] = t[2];
    }

    /// Bilinear interpolation of the cell values; identity outside the grid.
    pub fn sample(&self, z: Complex64) -> [f64; 3] {
        match self.grid.interp_weights(z) {
            None => [1.0, 0.0, 1.0],
            Some(ws) => {
                let mut t = [0.0; 3];
                for (k, w) in ws {
                    t[0] += w * self.s11[k];
                    t[1] += w * self.s12[k];
                    t[2] += w * self.s22[k];
                }
                t
            }
        }
    }

    pub fn det(&self, k: usize) -> f64 {
        self.s11[k] * self.s22[k] - self.s12[k] * self.s12[k]
    }

    /// SPD everywhere and identity outside the domain mask.
    pub fn validate(&self) -> Result<()> {
        check_spd(self)?;
        for k in 0..self.grid.len() {
            if !self.grid.in_mask(k) {
                let [a, b, c] = self.at(k);
                if (a - 1.0).abs() > 1e-12 || b.abs() > 1e-12 || (c - 1.0).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "conductivity differs from the identity outside the domain at cell {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl TensorField for ConductivityField {
    fn tensor(&self, z: Complex64) -> [f64; 3] {
        self.sample(z)
    }
}

fn check_spd(s: &ConductivityField) -> Result<()> {
    for k in 0..s.grid.len() {
        let det = s.det(k);
        let tr = s.s11[k] + s.s22[k];
        if !(det > SPD_TOL) || !(tr > 0.0) {
            return Err(Error::NonSpd { cell: k, det });
        }
    }
    Ok(())
}

/// The pair `(σ⁰, σ¹)` with `σ⁰ = (s11+s22)/2`, `σ¹ = (s11−s22)/2 − i s12`.
#[derive(Clone, Debug)]
pub struct ComplexCoefficients {
    pub grid: Grid2D,
    pub s0: Vec<f64>,
    pub s1: Vec<Complex64>,
}

pub fn coeffs_of(t: [f64; 3]) -> (f64, Complex64) {
    let [a, b, c] = t;
    (0.5 * (a + c), Complex64::new(0.5 * (a - c), -b))
}

pub fn tensor_of(s0: f64, s1: Complex64) -> [f64; 3] {
    [s0 + s1.re, -s1.im, s0 - s1.re]
}

pub fn complex_coeffs(s: &ConductivityField) -> ComplexCoefficients {
    let (s0, s1) = (0..s.grid.len()).map(|k| coeffs_of(s.at(k))).unzip();
    ComplexCoefficients { grid: s.grid.clone(), s0, s1 }
}

impl ComplexCoefficients {
    pub fn to_conductivity(&self) -> ConductivityField {
        let mut out = ConductivityField::identity(&self.grid);
        for k in 0..self.grid.len() {
            out.set(k, tensor_of(self.s0[k], self.s1[k]));
        }
        out
    }
}

/// Complex dilatation field with its sup norm `k`.
#[derive(Clone, Debug)]
pub struct BeltramiField {
    pub grid: Grid2D,
    pub mu: Vec<Complex64>,
    pub k: f64,
}

impl BeltramiField {
    pub fn new(grid: &Grid2D, mu: Vec<Complex64>) -> Result<Self> {
        if mu.len() != grid.len() {
            return Err(Error::Validation("field size does not match grid".into()));
        }
        let k = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
        if !(k < 1.0) {
            return Err(Error::Validation(format!("sup |mu| = {k} is not below 1")));
        }
        Ok(BeltramiField { grid: grid.clone(), mu, k })
    }

    pub fn zero(grid: &Grid2D) -> Self {
        BeltramiField { grid: grid.clone(), mu: vec![Complex64::new(0.0, 0.0); grid.len()], k: 0.0 }
    }
}

/// `μ = (s22 − s11 − 2i s12)/(s11 + s22 + 2√det)`.
pub fn mu_of_tensor(t: [f64; 3]) -> Complex64 {
    let [a, b, c] = t;
    let det = a * c - b * b;
    Complex64::new(c - a, -2.0 * b) / (a + c + 2.0 * det.sqrt())
}

pub fn beltrami_of_conductivity(s: &ConductivityField) -> Result<BeltramiField> {
    check_spd(s)?;
    let mu = (0..s.grid.len())
        .map(|k| if s.grid.in_mask(k) { mu_of_tensor(s.at(k)) } else { Complex64::new(0.0, 0.0) })
        .collect();
    BeltramiField::new(&s.grid, mu)
}

/// Complex structure of the metric `E dx² + 2F dx dy + G dy²`.
pub fn metric_to_beltrami(grid: &Grid2D, e: &[f64], f: &[f64], g: &[f64]) -> Result<BeltramiField> {
    let n = grid.len();
    if e.len() != n || f.len() != n || g.len() != n {
        return Err(Error::Validation("metric size does not match grid".into()));
    }
    let mut mu = Vec::with_capacity(n);
    for k in 0..n {
        let det = e[k] * g[k] - f[k] * f[k];
        if !(det > 0.0) || !(e[k] > 0.0) {
            return Err(Error::DegenerateMetric { cell: k });
        }
        mu.push(Complex64::new(0.5 * (e[k] - g[k]), f[k]) / (0.5 * (e[k] + g[k]) + det.sqrt()));
    }
    BeltramiField::new(grid, mu)
}
