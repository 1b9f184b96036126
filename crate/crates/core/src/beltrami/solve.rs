use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SpectralGrid;
use crate::fields::{
    beltrami_of_conductivity, coeffs_of, push_forward_at_source, BeltramiField, ConductivityField,
    Diffeomorphism, Domain, Grid2D,
};
use crate::{Error, Result};

/// Stopping rule of the Picard iteration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BeltramiOptions {
    /// Target residual relative to `‖μ‖₂`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BeltramiOptions {
    fn default() -> Self {
        BeltramiOptions { tol: 1e-10, max_iter: 200 }
    }
}

/// Normalized homeomorphic solution `w = z + R f₀` of `∂̄w = μ ∂w`.
#[derive(Clone, Debug)]
pub struct PrincipalSolution {
    pub spectral: SpectralGrid,
    pub w: Vec<Complex64>,
    pub f0: Vec<Complex64>,
    /// `∂w = 1 + Π f₀`.
    pub dw: Vec<Complex64>,
    /// `‖f₀ − μ(1 + Π f₀)‖₂`.
    pub residual: f64,
    pub iterations: usize,
    /// Successive residual ratios of the iteration.
    pub ratios: Vec<f64>,
    pub k: f64,
}

impl PrincipalSolution {
    pub fn dbar_w(&self) -> &[Complex64] {
        &self.f0
    }

    /// Largest contraction ratio observed after the first step.
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().skip(1).copied().fold(0.0, f64::max)
    }

    /// `sup |w − z|` over the outermost ring of cells.
    pub fn margin_defect(&self) -> f64 {
        let n = self.spectral.n;
        (0..n * n)
            .filter(|&k| {
                let (i, j) = (k % n, k / n);
                i == 0 || j == 0 || i == n - 1 || j == n - 1
            })
            .map(|k| (self.w[k] - self.spectral.point(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Real Jacobian `[[∂x Re w, ∂y Re w], [∂x Im w, ∂y Im w]]` at cell `k`.
    pub fn jacobian(&self, k: usize) -> [f64; 4] {
        let wx = self.dw[k] + self.f0[k];
        let wy = Complex64::new(0.0, 1.0) * (self.dw[k] - self.f0[k]);
        [wx.re, wy.re, wx.im, wy.im]
    }

    pub fn diffeomorphism(&self, domain: Domain) -> Result<Diffeomorphism> {
        let grid = self.spectral.grid(domain);
        let jac = (0..self.w.len()).map(|k| self.jacobian(k)).collect();
        let d = Diffeomorphism { grid, phi: self.w.clone(), jac };
        d.validate()?;
        Ok(d)
    }

    /// Bilinear interpolation of `w` at arbitrary points of the torus.
    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let g = self.spectral.grid(Domain::unit_disk());
        z.iter()
            .map(|&p| match g.interp_weights(p) {
                Some(ws) => ws.iter().map(|&(k, t)| self.w[k] * t).sum(),
                None => p,
            })
            .collect()
    }
}

/// Solves `f = μ(1 + Π f)` by Picard iteration and returns `w = z + R f`.
pub fn solve_beltrami(mu: &BeltramiField, opts: BeltramiOptions) -> Result<PrincipalSolution> {
    let sg = SpectralGrid::from_grid(&mu.grid)?;
    solve_on(&sg, &mu.mu, mu.k, opts)
}

pub fn solve_on(sg: &SpectralGrid, mu: &[Complex64], k: f64, opts: BeltramiOptions) -> Result<PrincipalSolution> {
    if mu.len() != sg.len() {
        return Err(Error::Validation("coefficient does not match the spectral grid".into()));
    }
    if !(k < 1.0) {
        return Err(Error::Validation(format!("sup |mu| = {k} is not below 1")));
    }
    sg.check_support(mu)?;
    let h = sg.h();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * h;
    let mu_norm = norm(mu);
    let mut f = mu.to_vec();
    let mut ratios = Vec::new();
    let mut prev = f64::NAN;
    let mut first = f64::NAN;
    let mut iterations = 0;
    let mut residual;
    loop {
        let pf = sg.beurling(&f);
        let next: Vec<Complex64> = mu.iter().zip(&pf).map(|(m, p)| m * (1.0 + p)).collect();
        let diff: Vec<Complex64> = next.iter().zip(&f).map(|(a, b)| a - b).collect();
        residual = norm(&diff);
        f = next;
        iterations += 1;
        if !residual.is_finite() {
            return Err(Error::NoContraction { residual, iterations });
        }
        if first.is_nan() {
            first = residual;
        } else if prev > 0.0 {
            ratios.push(residual / prev);
        }
        prev = residual;
        if residual <= opts.tol * mu_norm.max(f64::MIN_POSITIVE) || residual == 0.0 {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoContraction { residual, iterations });
        }
        if iterations >= 20 && residual > first {
            return Err(Error::NoContraction { residual, iterations });
        }
    }
    let rf = sg.cauchy(&f);
    let pf = sg.beurling(&f);
    let w = (0..sg.len()).map(|q| sg.point(q) + rf[q]).collect();
    let dw = pf.iter().map(|p| 1.0 + p).collect();
    Ok(PrincipalSolution { spectral: sg.clone(), w, f0: f, dw, residual, iterations, ratios, k })
}

/// Isothermal coordinates `F` of an anisotropic conductivity and the isotropic value `√det σ̂`.
pub struct IsothermalMap {
    pub solution: PrincipalSolution,
    /// `σ ∘ F` at the source cells.
    pub sigma_at_source: Vec<f64>,
    pub source: ConductivityField,
}

pub fn isothermal_map(sigma_hat: &ConductivityField, opts: BeltramiOptions) -> Result<IsothermalMap> {
    let mu = beltrami_of_conductivity(sigma_hat)?;
    let solution = solve_beltrami(&mu, opts)?;
    let sigma_at_source = (0..sigma_hat.grid.len()).map(|k| sigma_hat.det(k).sqrt()).collect();
    Ok(IsothermalMap { solution, sigma_at_source, source: sigma_hat.clone() })
}

impl IsothermalMap {
    /// `sup |σ¹|` of `F∗σ̂` evaluated at the source cells.
    pub fn isotropy_defect(&self) -> Result<f64> {
        let d = self.solution.diffeomorphism(self.source.grid.domain.clone())?;
        Ok(push_forward_at_source(&self.source, &d)
            .into_iter()
            .map(|t| coeffs_of(t).1.norm())
            .fold(0.0, f64::max))
    }

    /// `σ(w) = √det σ̂(F⁻¹(w))` on the cells of `target`.
    pub fn sigma_on(&self, target: &Grid2D) -> Result<Vec<f64>> {
        let d = self.solution.diffeomorphism(self.source.grid.domain.clone())?;
        let pre = d.inverse_many(&target.centers())?;
        crate::fields::isotropize_value(&self.source, &pre)
    }
}
