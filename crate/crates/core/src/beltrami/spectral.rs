use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fields::{Domain, Grid2D};
use crate::{Error, Result};

/// Periodic `L×L` torus sampled at `N×N` cell centres, with the transforms `R` and `Π`.
///
/// Both transforms are Fourier multipliers on densities of zero mean
/// (`−2i/κ` and `κ̄/κ` for `κ = k_x + i k_y`). The mean is carried by a smooth radial
/// bump whose transforms are known in closed form, so that `R f` keeps its
/// `m/(πz)` far field instead of the periodic image of it.
#[derive(Clone)]
pub struct SpectralGrid {
    pub n: usize,
    pub l: f64,
    pub center: Complex64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    r_mult: Vec<Complex64>,
    pi_mult: Vec<Complex64>,
    bump: Vec<f64>,
    bump_r: Vec<Complex64>,
    bump_pi: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).field("l", &self.l).field("center", &self.center).finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize, l: f64, center: Complex64) -> Result<Self> {
        if !n.is_power_of_two() || n < 16 {
            return Err(Error::Validation(format!("spectral grid size {n} must be a power of two >= 16")));
        }
        if !(l > 0.0) {
            return Err(Error::Validation("torus size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut r_mult = vec![Complex64::new(0.0, 0.0); n * n];
        let mut pi_mult = r_mult.clone();
        for j in 0..n {
            for i in 0..n {
                let kx = 2.0 * PI * freq(i, n) / l;
                let ky = 2.0 * PI * freq(j, n) / l;
                if i == 0 && j == 0 {
                    continue;
                }
                let kappa = Complex64::new(kx, ky);
                r_mult[j * n + i] = Complex64::new(0.0, -2.0) / kappa;
                pi_mult[j * n + i] = kappa.conj() / kappa;
            }
        }
        let mut g = SpectralGrid {
            n,
            l,
            center,
            fwd,
            inv,
            r_mult,
            pi_mult,
            bump: Vec::new(),
            bump_r: Vec::new(),
            bump_pi: Vec::new(),
        };
        g.init_bump();
        Ok(g)
    }

    /// Matches a square power-of-two grid.
    pub fn from_grid(grid: &Grid2D) -> Result<Self> {
        if grid.nx != grid.ny {
            return Err(Error::Validation("spectral grid must be square".into()));
        }
        let l = grid.nx as f64 * grid.h;
        let center = grid.origin + Complex64::new(0.5 * l, 0.5 * l);
        Self::new(grid.nx, l, center)
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid(&self, domain: Domain) -> Grid2D {
        Grid2D::square(self.center, 0.5 * self.l, self.n, domain).expect("valid square grid")
    }

    pub fn point(&self, k: usize) -> Complex64 {
        let h = self.h();
        let (i, j) = (k % self.n, k / self.n);
        self.center + Complex64::new(-0.5 * self.l + (i as f64 + 0.5) * h, -0.5 * self.l + (j as f64 + 0.5) * h)
    }

    /// Index of the reference cell where the periodic part of `R` is pinned to zero.
    pub fn reference_cell(&self) -> usize {
        0
    }

    /// True if `k` lies outside the central half of the torus.
    pub fn in_margin(&self, k: usize) -> bool {
        let d = self.point(k) - self.center;
        d.re.abs() > 0.25 * self.l || d.im.abs() > 0.25 * self.l
    }

    /// Checks that `f` vanishes outside the central half of the torus.
    pub fn check_support(&self, f: &[Complex64]) -> Result<()> {
        for (k, v) in f.iter().enumerate() {
            if *v != Complex64::new(0.0, 0.0) && self.in_margin(k) {
                return Err(Error::Alias(format!("nonzero density at {} inside the margin", self.point(k))));
            }
        }
        Ok(())
    }

    fn bump_radius(&self) -> f64 {
        self.l / 8.0
    }

    fn init_bump(&mut self) {
        let rho = self.bump_radius();
        let profile = |t: f64| if t < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
        // mass inside radius r by composite Simpson on a fine radial grid
        let m = 4096;
        let dt = 1.0 / m as f64;
        let mut cum = vec![0.0; m + 1];
        for q in 0..m {
            let f = |t: f64| 2.0 * PI * profile(t) * t;
            let (a, b) = (q as f64 * dt, (q + 1) as f64 * dt);
            cum[q + 1] = cum[q] + dt / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        }
        let total = cum[m];
        let mass = |t: f64| -> f64 {
            if t >= 1.0 {
                return 1.0;
            }
            let x = t * m as f64;
            let q = (x.floor() as usize).min(m - 1);
            let (a, b) = (q as f64 * dt, t);
            let f = |s: f64| 2.0 * PI * profile(s) * s;
            (cum[q] + (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))) / total
        };
        let scale = 1.0 / (total * rho * rho);
        let n2 = self.len();
        self.bump = vec![0.0; n2];
        self.bump_r = vec![Complex64::new(0.0, 0.0); n2];
        self.bump_pi = vec![Complex64::new(0.0, 0.0); n2];
        for k in 0..n2 {
            let u = self.point(k) - self.center;
            let r = u.norm();
            let t = r / rho;
            let b = scale * profile(t);
            self.bump[k] = b;
            if r == 0.0 {
                continue;
            }
            let mm = mass(t);
            self.bump_r[k] = mm / (PI * u);
            self.bump_pi[k] = b * u.conj() / u - mm / (PI * u * u);
        }
    }

    /// Discrete integral `Σ f h²`.
    pub fn integral(&self, f: &[Complex64]) -> Complex64 {
        f.iter().sum::<Complex64>() * self.h() * self.h()
    }

    fn split_mean(&self, f: &[Complex64]) -> (Complex64, Vec<Complex64>) {
        let m = self.integral(f);
        let g = f.iter().zip(&self.bump).map(|(v, b)| v - m * b).collect();
        (m, g)
    }

    /// Applies a Fourier multiplier. The spectrum is kept transposed between
    /// the two passes, which saves two transposes.
    fn multiplier(&self, mut g: Vec<Complex64>, mult: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        self.fwd.process(&mut g);
        transpose(&mut g, n);
        self.fwd.process(&mut g);
        let s = 1.0 / (n * n) as f64;
        for (i, row) in g.chunks_mut(n).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= mult[j * n + i] * s;
            }
        }
        self.inv.process(&mut g);
        transpose(&mut g, n);
        self.inv.process(&mut g);
        g
    }

    /// Periodic `∂̄⁻¹` of a zero-mean density.
    pub fn periodic_cauchy(&self, g: &[Complex64]) -> Vec<Complex64> {
        self.multiplier(g.to_vec(), &self.r_mult)
    }

    /// Periodic `∂∂̄⁻¹` of a zero-mean density.
    pub fn periodic_beurling(&self, g: &[Complex64]) -> Vec<Complex64> {
        self.multiplier(g.to_vec(), &self.pi_mult)
    }

    /// `R f = (1/π) ∫ f(ζ)/(z − ζ) dA(ζ)`, pinned at the reference cell.
    pub fn cauchy(&self, f: &[Complex64]) -> Vec<Complex64> {
        let (m, g) = self.split_mean(f);
        let mut r = self.periodic_cauchy(&g);
        let r0 = r[self.reference_cell()];
        for (k, v) in r.iter_mut().enumerate() {
            *v += m * self.bump_r[k] - r0;
        }
        r
    }

    /// `Π f = ∂ R f`.
    pub fn beurling(&self, f: &[Complex64]) -> Vec<Complex64> {
        let (m, g) = self.split_mean(f);
        let mut p = self.periodic_beurling(&g);
        for (k, v) in p.iter_mut().enumerate() {
            *v += m * self.bump_pi[k];
        }
        p
    }

    /// Spectral `∂̄` of a periodic field.
    pub fn dbar(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.derivative(u, false)
    }

    /// Spectral `∂` of a periodic field.
    pub fn d(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.derivative(u, true)
    }

    fn derivative(&self, u: &[Complex64], holo: bool) -> Vec<Complex64> {
        let n = self.n;
        let mut mult = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for i in 0..n {
                if i == n / 2 || j == n / 2 {
                    continue;
                }
                let kappa = Complex64::new(2.0 * PI * freq(i, n) / self.l, 2.0 * PI * freq(j, n) / self.l);
                let k = if holo { kappa.conj() } else { kappa };
                mult[j * n + i] = Complex64::new(0.0, 0.5) * k;
            }
        }
        self.multiplier(u.to_vec(), &mult)
    }
}

fn freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn transpose(a: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for jb in (0..n).step_by(B) {
        for ib in (jb..n).step_by(B) {
            for j in jb..(jb + B).min(n) {
                let i0 = if ib == jb { j + 1 } else { ib };
                for i in i0..(ib + B).min(n) {
                    a.swap(j * n + i, i * n + j);
                }
            }
        }
    }
}
