//! Riemann surfaces in ℂ² from their boundary curve.
//!
//! For `a` off the projection `p(Γ)` of the boundary onto the `z₁` axis, the
//! number of sheets over `a` is the winding number of `p(Γ)` about `a`, and the
//! power sums of the `z₂` values over `a` are contour integrals over `Γ`:
//!
//! ```text
//! N_a = (1/2πi) ∮_Γ dz₁/(z₁ − a),    p_k(a) = (1/2πi) ∮_Γ z₂ᵏ dz₁/(z₁ − a).
//! ```
//!
//! Newton's identities turn `p₁..p_N` into a monic polynomial whose roots are
//! the branch values.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forward::boundary::spectral_derivative;
use crate::{Error, Result};

/// Samples of a closed curve `t ↦ (z₁(t), z₂(t))`; the last sample repeats the first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveBoundarySample {
    pub t: Vec<f64>,
    pub z1: Vec<Complex64>,
    pub z2: Vec<Complex64>,
    pub closed: bool,
}

/// Largest chord allowed, as a fraction of the curve length.
pub const MAX_CHORD_FRACTION: f64 = 0.05;

impl CurveBoundarySample {
    pub fn new(t: Vec<f64>, z1: Vec<Complex64>, z2: Vec<Complex64>) -> Result<Self> {
        if t.len() != z1.len() || t.len() != z2.len() {
            return Err(Error::Validation("curve columns differ in length".into()));
        }
        if t.len() < 9 {
            return Err(Error::Validation(format!("need at least 8 curve intervals, got {}", t.len().saturating_sub(1))));
        }
        let n = t.len() - 1;
        let closed = (z1[n] - z1[0]).norm() <= 1e-10 && (z2[n] - z2[0]).norm() <= 1e-10;
        let s = CurveBoundarySample { t, z1, z2, closed };
        s.validate()?;
        Ok(s)
    }

    /// `n` uniform samples of `f` on `[0, 2π)` plus the closing sample.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> (Complex64, Complex64)) -> Result<Self> {
        let mut t = Vec::with_capacity(n + 1);
        let mut z1 = Vec::with_capacity(n + 1);
        let mut z2 = Vec::with_capacity(n + 1);
        for k in 0..n {
            let tk = 2.0 * PI * k as f64 / n as f64;
            let (a, b) = f(tk);
            t.push(tk);
            z1.push(a);
            z2.push(b);
        }
        t.push(2.0 * PI);
        z1.push(z1[0]);
        z2.push(z2[0]);
        Self::new(t, z1, z2)
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.t.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.closed {
            return Err(Error::Validation("curve is not closed: first and last samples differ".into()));
        }
        let n = self.len();
        let span = self.t[n] - self.t[0];
        let dt = span / n as f64;
        if !(span > 0.0) || (1..=n).any(|k| ((self.t[k] - self.t[k - 1]) - dt).abs() > 1e-8 * span) {
            return Err(Error::Validation("curve parameter must be uniformly spaced and increasing".into()));
        }
        let chords: Vec<f64> = (0..n)
            .map(|k| ((self.z1[k + 1] - self.z1[k]).norm_sqr() + (self.z2[k + 1] - self.z2[k]).norm_sqr()).sqrt())
            .collect();
        let length: f64 = chords.iter().sum();
        if chords.iter().any(|c| *c > MAX_CHORD_FRACTION * length) {
            return Err(Error::Validation("curve is undersampled: a chord exceeds the resolution bound".into()));
        }
        let scale = self.z1.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        for k in 0..n {
            let a = (self.z1[k + 1] - self.z1[k]).norm();
            let b = (self.z1[(k + 2) % n] - self.z1[k + 1]).norm();
            if a.max(b) <= 1e-12 * scale {
                return Err(Error::Validation(format!("z₁ projection is stationary near sample {k}")));
            }
        }
        Ok(())
    }

    fn open(&self) -> (&[Complex64], &[Complex64]) {
        let n = self.len();
        (&self.z1[..n], &self.z2[..n])
    }

    /// `dz₁` per unit parameter step at each sample, spectrally.
    fn dz1(&self) -> Vec<Complex64> {
        spectral_derivative(self.open().0)
    }

    /// Distance from `a` to the polygon through the `z₁` samples.
    pub fn projection_distance(&self, a: Complex64) -> f64 {
        let n = self.len();
        (0..n).map(|k| segment_distance(a, self.z1[k], self.z1[k + 1])).fold(f64::INFINITY, f64::min)
    }

    /// Diameter of the bounding box of the projection.
    fn projection_diameter(&self) -> f64 {
        let (lo, hi) = bbox(self.open().0);
        (hi - lo).norm()
    }

    /// Longest step between consecutive projected samples.
    fn max_spacing(&self) -> f64 {
        let z = self.open().0;
        (0..z.len()).map(|i| (z[(i + 1) % z.len()] - z[i]).norm()).fold(0.0, f64::max)
    }
}

fn segment_distance(a: Complex64, p: Complex64, q: Complex64) -> f64 {
    let d = q - p;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (a - p).norm();
    }
    let s = (((a - p) * d.conj()).re / l2).clamp(0.0, 1.0);
    (a - (p + d * s)).norm()
}

fn bbox(z: &[Complex64]) -> (Complex64, Complex64) {
    let mut lo = Complex64::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in z {
        lo.re = lo.re.min(p.re);
        lo.im = lo.im.min(p.im);
        hi.re = hi.re.max(p.re);
        hi.im = hi.im.max(p.im);
    }
    (lo, hi)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveOptions {
    /// Queries closer than this fraction of the projection's diameter to `p(Γ)` are rejected.
    pub exclusion: f64,
    /// Queries closer than this many sample spacings to `p(Γ)` are rejected.
    pub min_spacings: f64,
    /// Largest allowed distance of the winding quadrature from an integer.
    pub integer_tol: f64,
    /// Largest allowed `|P(root)|`.
    pub residual_tol: f64,
    /// Roots closer than this are treated as a branch point.
    pub branch_separation: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { exclusion: 0.03, min_spacings: 2.0, integer_tol: 1e-3, residual_tol: 1e-6, branch_separation: 1e-3 }
    }
}

fn check_admissible(g: &CurveBoundarySample, a: Complex64, opts: &CurveOptions) -> Result<()> {
    let dist = g.projection_distance(a);
    // within a few spacings the trapezoidal rule loses its exponential accuracy
    if dist < (opts.exclusion * g.projection_diameter()).max(opts.min_spacings * g.max_spacing()) {
        return Err(Error::OnProjection { point: a.to_string(), dist });
    }
    Ok(())
}

/// `(1/2πi) ∮ z₂ᵏ dz₁/(z₁ − a)` for `k = 0..=kmax` by the trapezoidal rule.
fn moments(g: &CurveBoundarySample, a: Complex64, kmax: usize) -> Vec<Complex64> {
    let (z1, z2) = g.open();
    let dz = g.dz1();
    let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
    for i in 0..z1.len() {
        let w = dz[i] / (z1[i] - a);
        let mut p = Complex64::new(1.0, 0.0);
        for o in out.iter_mut() {
            *o += p * w;
            p *= z2[i];
        }
    }
    // the sample spacing in the uniform parameter is 2π/n and dz is per unit of it
    let h = 2.0 * PI / z1.len() as f64;
    out.iter().map(|v| v * h / Complex64::new(0.0, 2.0 * PI)).collect()
}

/// Number of sheets over `a`.
pub fn sheet_count(g: &CurveBoundarySample, a: Complex64, opts: &CurveOptions) -> Result<usize> {
    check_admissible(g, a, opts)?;
    let w = moments(g, a, 0)[0];
    let k = w.re.round();
    if (w - k).norm() > opts.integer_tol || k < 0.0 {
        return Err(Error::NonInteger { value: w.re });
    }
    Ok(k as usize)
}

/// Power sums `p₁..p_K` of the `z₂` values over `a`.
pub fn newton_sums(g: &CurveBoundarySample, a: Complex64, k: usize, opts: &CurveOptions) -> Result<Vec<Complex64>> {
    check_admissible(g, a, opts)?;
    Ok(moments(g, a, k)[1..].to_vec())
}

/// Elementary symmetric functions `e₀..e_N` from power sums.
pub fn elementary_symmetric(p: &[Complex64]) -> Vec<Complex64> {
    let n = p.len();
    let mut e = vec![Complex64::new(0.0, 0.0); n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[k - i] * p[i - 1];
        }
        e[k] = s / k as f64;
    }
    e
}

/// Power sums of a list of values.
pub fn power_sums(roots: &[Complex64], k: usize) -> Vec<Complex64> {
    (1..=k).map(|j| roots.iter().map(|r| r.powu(j as u32)).sum()).collect()
}

/// Roots of the monic polynomial with power sums `p`, and `max |P(root)|`.
pub fn branch_values(p: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let n = p.len();
    if n == 0 {
        return Err(Error::Validation("need at least one power sum".into()));
    }
    let e = elementary_symmetric(p);
    // P(x) = Σ c_j x^{N−j}, c_j = (−1)^j e_j
    let c: Vec<Complex64> = (0..=n).map(|j| if j % 2 == 0 { e[j] } else { -e[j] }).collect();
    let eval = |x: Complex64| c.iter().fold(Complex64::new(0.0, 0.0), |acc, cj| acc * x + cj);
    let deriv = |x: Complex64| {
        (0..n).fold(Complex64::new(0.0, 0.0), |acc, j| acc * x + c[j] * (n - j) as f64)
    };
    let mut roots = if n == 1 {
        vec![-c[1]]
    } else {
        let comp = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            if i == 0 {
                -c[j + 1]
            } else if i == j + 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ev = comp
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::IllConditioned { residual: f64::INFINITY })?;
        ev.iter().copied().collect::<Vec<_>>()
    };
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*r);
            if d.norm() == 0.0 {
                break;
            }
            let step = eval(*r) / d;
            if !step.is_finite() || step.norm() > 1e-3 * (1.0 + r.norm()) {
                break;
            }
            *r -= step;
        }
    }
    let residual = roots.iter().map(|r| eval(*r).norm()).fold(0.0, f64::max);
    Ok((roots, residual))
}

/// Branch values over one query point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructedSheet {
    pub a: Complex64,
    pub count: usize,
    pub values: Vec<Complex64>,
    pub residual: f64,
    /// Label of the bounded component of `ℂ ∖ p(Γ)` containing `a`; `None` for the unbounded one.
    pub component: Option<usize>,
}

/// Result of a reconstruction: accepted sheets plus the queries rejected near `p(Γ)`
/// or near a branch point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceCloud {
    pub sheets: Vec<ReconstructedSheet>,
    pub rejected: Vec<(Complex64, String)>,
}

impl SurfaceCloud {
    /// `(a, z₂, sheet index)` for every recovered point.
    pub fn points(&self) -> Vec<(Complex64, Complex64, usize)> {
        self.sheets.iter().flat_map(|s| s.values.iter().enumerate().map(move |(j, v)| (s.a, *v, j))).collect()
    }
}

/// Branch values over one query.
pub fn reconstruct_at(g: &CurveBoundarySample, a: Complex64, opts: &CurveOptions) -> Result<ReconstructedSheet> {
    let count = sheet_count(g, a, opts)?;
    if count == 0 {
        return Ok(ReconstructedSheet { a, count, values: vec![], residual: 0.0, component: None });
    }
    let p = newton_sums(g, a, count, opts)?;
    let (values, residual) = branch_values(&p)?;
    if !(residual <= opts.residual_tol) {
        return Err(Error::IllConditioned { residual });
    }
    let sep = (0..count)
        .flat_map(|i| (i + 1..count).map(move |j| (i, j)))
        .map(|(i, j)| (values[i] - values[j]).norm())
        .fold(f64::INFINITY, f64::min);
    if sep < opts.branch_separation {
        return Err(Error::IllConditioned { residual: sep });
    }
    Ok(ReconstructedSheet { a, count, values, residual, component: None })
}

/// Labels of the components of `ℂ ∖ p(Γ)` on a pixel raster of the projection.
struct Components {
    origin: Complex64,
    h: f64,
    m: usize,
    label: Vec<Option<usize>>,
    unbounded: usize,
}

impl Components {
    fn new(g: &CurveBoundarySample, queries: usize) -> Self {
        let (lo, hi) = bbox(g.open().0);
        let side = (hi.re - lo.re).max(hi.im - lo.im).max(1e-12);
        let m = (4 * (queries as f64).sqrt().ceil() as usize).clamp(64, 2048);
        let h = side * 1.2 / m as f64;
        let origin = (lo + hi) * 0.5 - Complex64::new(0.6 * side, 0.6 * side);
        let mut wall = vec![false; m * m];
        let n = g.len();
        for k in 0..n {
            let (p, q) = (g.z1[k], g.z1[k + 1]);
            let steps = (((q - p).norm() / (0.25 * h)).ceil() as usize).max(1);
            for s in 0..=steps {
                let z = p + (q - p) * (s as f64 / steps as f64);
                let i = ((z.re - origin.re) / h).floor() as isize;
                let j = ((z.im - origin.im) / h).floor() as isize;
                for (di, dj) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (a, b) = (i + di, j + dj);
                    if a >= 0 && b >= 0 && (a as usize) < m && (b as usize) < m {
                        wall[b as usize * m + a as usize] = true;
                    }
                }
            }
        }
        let mut label = vec![None; m * m];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..m * m {
            if wall[start] || label[start].is_some() {
                continue;
            }
            label[start] = Some(next);
            queue.push_back(start);
            while let Some(k) = queue.pop_front() {
                let (i, j) = (k % m, k / m);
                let mut visit = |nk: usize| {
                    if !wall[nk] && label[nk].is_none() {
                        label[nk] = Some(next);
                        queue.push_back(nk);
                    }
                };
                if i > 0 {
                    visit(k - 1);
                }
                if i + 1 < m {
                    visit(k + 1);
                }
                if j > 0 {
                    visit(k - m);
                }
                if j + 1 < m {
                    visit(k + m);
                }
            }
            next += 1;
        }
        // pixel 0 is a corner, outside the padded bounding box of the curve
        let unbounded = label[0].expect("corner pixel lies off the curve");
        Components { origin, h, m, label, unbounded }
    }

    fn of(&self, a: Complex64) -> Option<usize> {
        let i = ((a.re - self.origin.re) / self.h).floor();
        let j = ((a.im - self.origin.im) / self.h).floor();
        if i < 0.0 || j < 0.0 || i >= self.m as f64 || j >= self.m as f64 {
            return None;
        }
        self.label[j as usize * self.m + i as usize].filter(|l| *l != self.unbounded)
    }
}

/// Reconstructs the surface over `queries`, checking that the sheet count is
/// constant on each component of `ℂ ∖ p(Γ)`.
pub fn reconstruct_surface(g: &CurveBoundarySample, queries: &[Complex64], opts: &CurveOptions) -> Result<SurfaceCloud> {
    let comps = Components::new(g, queries.len());
    let results: Vec<(Complex64, Result<ReconstructedSheet>)> =
        queries.par_iter().map(|&a| (a, reconstruct_at(g, a, opts))).collect();
    let mut sheets = Vec::new();
    let mut rejected = Vec::new();
    let mut counts: std::collections::HashMap<Option<usize>, usize> = Default::default();
    for (a, r) in results {
        match r {
            Ok(mut s) => {
                s.component = comps.of(a);
                if let Some(&prev) = counts.get(&s.component) {
                    if prev != s.count {
                        return Err(Error::InconsistentSheetCount {
                            component: s.component.unwrap_or(usize::MAX),
                            a: prev,
                            b: s.count,
                        });
                    }
                } else {
                    counts.insert(s.component, s.count);
                }
                sheets.push(s);
            }
            Err(e @ (Error::OnProjection { .. } | Error::IllConditioned { .. })) => rejected.push((a, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(SurfaceCloud { sheets, rejected })
}
