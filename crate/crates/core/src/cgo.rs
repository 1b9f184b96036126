//! Complex geometrical optics solutions from boundary data.
//!
//! `ψ(·,λ)` solves the conductivity equation and behaves like `e^{λz}` at
//! infinity. On the boundary it satisfies
//!
//! ```text
//! ψ(z) = e^{λz} + ∮ Φ_λ(z − ζ) (Λσ − Λ₀) ψ(ζ) ds(ζ),
//! ```
//!
//! with `Φ_λ(z) = −(1/2π) Re E₁(−λz)` the exponentially growing fundamental
//! solution of the Laplacian (`ΔΦ_λ = δ`). The equation is discretized with
//! Kress's logarithmic product quadrature and solved densely for
//! `m = ψ e^{−λz}`, which is `O(1)` everywhere.
//!
//! As `|λ| → ∞`, `log ψ(z,λ)/λ → F(z)` where `F` is the principal isothermal
//! map; [`recover_f_boundary`] extracts it along a ladder of spectral
//! parameters.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forward::{BoundaryDiscretization, DtnMatrix};
use crate::linalg::ComplexLu;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E₁(z)` for complex `z`, principal branch.
///
/// Power series where it does not cancel, Lentz continued fraction elsewhere.
pub fn expint_e1(z: Complex64) -> Complex64 {
    let a = z.norm();
    if a == 0.0 {
        return Complex64::new(f64::INFINITY, 0.0);
    }
    // the series loses about e^{|z| + Re z} to cancellation
    if a <= 2.0 || a + z.re < 10.0 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..400 {
            term *= -z / k as f64;
            let t = term / k as f64;
            sum += t;
            if t.norm() <= 1e-17 * sum.norm() {
                break;
            }
        }
        -EULER_GAMMA - z.ln() - sum
    } else {
        // E₁(z) = e^{−z} / (z + 1/(1 + 1/(z + 2/(1 + 2/(z + …)))))
        let tiny = 1e-300;
        let one = Complex64::new(1.0, 0.0);
        let mut f = z;
        let mut c = z;
        let mut d = Complex64::new(0.0, 0.0);
        for k in 1..2000 {
            let (an, bn) = if k % 2 == 1 { ((k / 2 + 1) as f64, one) } else { ((k / 2) as f64, z) };
            d = bn + an * d;
            if d.norm() < tiny {
                d = Complex64::new(tiny, 0.0);
            }
            c = bn + an / c;
            if c.norm() < tiny {
                c = Complex64::new(tiny, 0.0);
            }
            d = one / d;
            let delta = c * d;
            f *= delta;
            if (delta - one).norm() < 1e-16 {
                break;
            }
        }
        (-z).exp() / f
    }
}

/// `Φ_λ(z) = −(1/2π) Re E₁(−λz)`, real and satisfying `ΔΦ_λ = δ`.
pub fn faddeev_kernel(z: Complex64, lambda: Complex64) -> f64 {
    -expint_e1(-lambda * z).re / (2.0 * PI)
}

/// The reduced kernel `g_λ(z)`, with `∂̄(∂ + λ) g_λ = δ`.
///
/// `G_λ(z, ζ) = e^{λ(z−ζ)} g_λ(z − ζ)` is then a fundamental solution of `∂̄∂`.
pub fn faddeev_green(z: Complex64, lambda: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::EvalSingular);
    }
    if lambda.norm() == 0.0 {
        return Err(Error::Validation("spectral parameter must be nonzero".into()));
    }
    Ok(4.0 * faddeev_kernel(z, lambda) * (-lambda * z).exp())
}

/// One spectral parameter with the radius of its perturbation disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    pub lambda: Complex64,
    pub eps: f64,
}

/// Spectral parameters at which traces are computed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpectralParameterSet {
    pub params: Vec<SpectralParameter>,
}

/// Number of samples of `λ′` per perturbation disk.
pub const DISK_SAMPLES: usize = 8;

impl SpectralParameterSet {
    pub fn new(params: Vec<SpectralParameter>) -> Self {
        SpectralParameterSet { params }
    }

    /// `|λ| ∈ moduli` along `directions` equally spaced rays, all with radius `eps`.
    pub fn ladder(moduli: &[f64], directions: usize, eps: f64) -> Self {
        let mut params = Vec::new();
        for &m in moduli {
            for d in 0..directions {
                let lambda = Complex64::from_polar(m, -2.0 * PI * d as f64 / directions as f64);
                params.push(SpectralParameter { lambda, eps });
            }
        }
        SpectralParameterSet { params }
    }

    pub fn validate(&self, lambda_min: f64) -> Result<()> {
        for p in &self.params {
            if !(p.lambda.norm() >= lambda_min) {
                return Err(Error::Validation(format!("|λ| = {} is below λ_min = {lambda_min}", p.lambda.norm())));
            }
            if !(p.eps >= 0.0) || p.lambda.norm() - p.eps < lambda_min {
                return Err(Error::Validation(format!("perturbation radius {} too large at λ = {}", p.eps, p.lambda)));
            }
        }
        Ok(())
    }

    /// The centre followed by `DISK_SAMPLES − 1` points on the circle of radius `eps`.
    pub fn samples(p: &SpectralParameter) -> Vec<Complex64> {
        if p.eps == 0.0 {
            return vec![p.lambda];
        }
        let mut v = vec![p.lambda];
        let m = DISK_SAMPLES - 1;
        v.extend((0..m).map(|k| p.lambda + Complex64::from_polar(p.eps, 2.0 * PI * k as f64 / m as f64)));
        v
    }

    /// Every `λ′` to solve for, with the index of its parameter.
    pub fn all_samples(&self) -> Vec<(usize, Complex64)> {
        self.params.iter().enumerate().flat_map(|(i, p)| Self::samples(p).into_iter().map(move |l| (i, l))).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CgoOptions {
    /// Condition number above which `λ` is treated as exceptional.
    pub cond_max: f64,
    pub lambda_min: f64,
}

impl Default for CgoOptions {
    fn default() -> Self {
        CgoOptions { cond_max: 1e10, lambda_min: 2.0 }
    }
}

/// Boundary values of `ψ(·,λ)` for one `λ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lambda: Complex64,
    /// Index into the parameter set this sample belongs to.
    pub param: usize,
    pub psi: Vec<Complex64>,
    /// 1-norm condition estimate of the scaled operator.
    pub cond: f64,
}

impl TraceEntry {
    /// `ψ e^{−λz}`.
    pub fn reduced(&self, nodes: &[Complex64]) -> Vec<Complex64> {
        self.psi.iter().zip(nodes).map(|(p, z)| p * (-self.lambda * z).exp()).collect()
    }
}

/// Traces over a set of spectral parameters on a common boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CgoTrace {
    pub nodes: Vec<Complex64>,
    pub params: SpectralParameterSet,
    pub entries: Vec<TraceEntry>,
    /// Samples skipped as near-exceptional, with their condition numbers.
    pub skipped: Vec<(Complex64, f64)>,
}

/// The discretized boundary integral operator for a fixed `Λσ − Λ₀`.
pub struct BoundaryIntegral {
    pub bd: BoundaryDiscretization,
    /// `Λσ − Λ₀` as a flux-density matrix.
    pub diff: DMatrix<f64>,
    kress: Vec<f64>,
    speed: Vec<f64>,
}

impl BoundaryIntegral {
    pub fn new(lam: &DtnMatrix, lam0: &DtnMatrix) -> Result<Self> {
        lam.check_convention(lam0)?;
        Self::from_difference(lam.bd.clone(), &lam.data - &lam0.data)
    }

    /// From `Λσ − Λ₀` computed directly, e.g. by `dtn_perturbation`.
    pub fn from_difference(bd: BoundaryDiscretization, diff: DMatrix<f64>) -> Result<Self> {
        let n = bd.len();
        if diff.nrows() != n || diff.ncols() != n {
            return Err(Error::Validation("DtN difference does not match the boundary".into()));
        }
        if n % 2 != 0 {
            return Err(Error::Validation("the boundary quadrature needs an even number of nodes".into()));
        }
        let speed = bd.speed();
        Ok(BoundaryIntegral { kress: kress_weights(n), speed, bd, diff })
    }

    pub fn len(&self) -> usize {
        self.bd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bd.is_empty()
    }

    /// `K` with `(Kf)(z_i) ≈ ∮ Φ_λ(z_i − ζ) f(ζ) ds(ζ)`.
    pub fn single_layer(&self, lambda: Complex64) -> DMatrix<f64> {
        let n = self.len();
        let z = &self.bd.nodes;
        let h = 2.0 * PI / n as f64;
        let log_lambda = lambda.norm().ln();
        DMatrix::from_fn(n, n, |i, j| {
            let d = (i + n - j) % n;
            let preg = if i == j {
                (EULER_GAMMA + log_lambda + self.speed[i].ln()) / (2.0 * PI)
            } else {
                let s = (0.5 * h * d as f64).sin();
                faddeev_kernel(z[i] - z[j], lambda) - (4.0 * s * s).ln() / (4.0 * PI)
            };
            (self.kress[d] / (4.0 * PI) + h * preg) * self.speed[j]
        })
    }

    /// `I − K(Λσ − Λ₀)`.
    pub fn operator(&self, lambda: Complex64) -> DMatrix<f64> {
        let k = self.single_layer(lambda);
        DMatrix::identity(self.len(), self.len()) - k * &self.diff
    }

    /// Solves for `ψ|∂X` at one `λ`.
    pub fn solve(&self, lambda: Complex64, opts: &CgoOptions) -> Result<TraceEntry> {
        if !(lambda.norm() >= opts.lambda_min) {
            return Err(Error::Validation(format!("|λ| = {} is below λ_min = {}", lambda.norm(), opts.lambda_min)));
        }
        let n = self.len();
        let a = self.operator(lambda);
        let e: Vec<Complex64> = self.bd.nodes.iter().map(|z| (lambda * z).exp()).collect();
        // scaled operator e^{−λz_i} A_ij e^{λz_j} acting on m = ψ e^{−λz}
        let mut s = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                s.push(a[(i, j)] * e[j] / e[i]);
            }
        }
        let lu = ComplexLu::factor(n, s).map_err(|_| Error::NearExceptional { lambda: lambda.to_string(), cond: f64::INFINITY })?;
        let cond = lu.cond1();
        if !(cond <= opts.cond_max) {
            return Err(Error::NearExceptional { lambda: lambda.to_string(), cond });
        }
        let m = lu.solve(&vec![Complex64::new(1.0, 0.0); n]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure(format!("non-finite solution at λ = {lambda}")));
        }
        let psi = m.iter().zip(&e).map(|(m, e)| m * e).collect();
        Ok(TraceEntry { lambda, param: 0, psi, cond })
    }

    /// Solves at every sample of `set`, skipping near-exceptional ones.
    pub fn traces(&self, set: &SpectralParameterSet, opts: &CgoOptions) -> Result<CgoTrace> {
        set.validate(opts.lambda_min)?;
        let samples = set.all_samples();
        let results: Vec<(usize, Complex64, Result<TraceEntry>)> =
            samples.into_par_iter().map(|(p, l)| (p, l, self.solve(l, opts))).collect();
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for (p, l, r) in results {
            match r {
                Ok(mut e) => {
                    e.param = p;
                    entries.push(e);
                }
                Err(Error::NearExceptional { cond, .. }) => skipped.push((l, cond)),
                Err(e) => return Err(e),
            }
        }
        Ok(CgoTrace { nodes: self.bd.nodes.clone(), params: set.clone(), entries, skipped })
    }
}

/// Kress weights `R(t_i − t_j)` for `∫ log(4 sin²((t−τ)/2)) f(τ) dτ`, by offset.
fn kress_weights(n: usize) -> Vec<f64> {
    let m = n / 2;
    (0..n)
        .map(|d| {
            let t = 2.0 * PI * d as f64 / n as f64;
            let mut r = -(PI / (m * m) as f64) * (m as f64 * t).cos();
            for k in 1..m {
                r -= (2.0 * PI / m as f64) * (k as f64 * t).cos() / k as f64;
            }
            r
        })
        .collect()
}

/// `ψ|∂X` for one `λ` from `Λσ` and `Λ₀`.
pub fn solve_boundary_integral(lam: &DtnMatrix, lam0: &DtnMatrix, lambda: Complex64, opts: &CgoOptions) -> Result<TraceEntry> {
    BoundaryIntegral::new(lam, lam0)?.solve(lambda, opts)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    /// Largest allowed sup-norm change between successive ladder moduli.
    pub tol: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { tol: 0.1 }
    }
}

/// Recovered `F|∂X` with the estimate at every ladder modulus.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryMap {
    pub nodes: Vec<Complex64>,
    pub values: Vec<Complex64>,
    pub ladder: Vec<(f64, Vec<Complex64>)>,
}

impl BoundaryMap {
    pub fn error(&self, truth: &[Complex64]) -> f64 {
        sup_dist(&self.values, truth)
    }

    /// Sup error against `truth` at each ladder modulus.
    pub fn ladder_errors(&self, truth: &[Complex64]) -> Vec<(f64, f64)> {
        self.ladder.iter().map(|(m, v)| (*m, sup_dist(v, truth))).collect()
    }
}

fn sup_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `log m` unwound by continuity around the boundary from `anchor`, where the
/// branch nearest `target` is taken.
fn unwound_log(m: &[Complex64], anchor: usize, target: Complex64) -> Result<Vec<Complex64>> {
    let n = m.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let nearest = |v: Complex64, im: f64| {
        let k = ((im - v.im) / (2.0 * PI)).round();
        v + Complex64::new(0.0, 2.0 * PI * k)
    };
    out[anchor] = nearest(m[anchor].ln(), target.im);
    let mut prev = out[anchor];
    for step in 1..=n {
        let j = (anchor + step) % n;
        let v = nearest(m[j].ln(), prev.im);
        if step == n {
            if (v.im - out[anchor].im).abs() > PI {
                return Err(Error::BranchAmbiguity(format!(
                    "log ψ winds by {:.2}·2π around the boundary",
                    (v.im - out[anchor].im) / (2.0 * PI)
                )));
            }
        } else {
            out[j] = v;
        }
        prev = v;
    }
    Ok(out)
}

/// `log m` with the branch at each node nearest `λ(estimate − z)`.
fn nearest_log(m: &[Complex64], lambda: Complex64, estimate: &[Complex64], nodes: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .zip(estimate.iter().zip(nodes))
        .map(|(v, (f, z))| {
            let l = v.ln();
            let k = (((lambda * (f - z)).im - l.im) / (2.0 * PI)).round();
            l + Complex64::new(0.0, 2.0 * PI * k)
        })
        .collect()
}

/// Weight of a direction at a node: zero unless the node is lit within 60° of
/// the direction, rising smoothly to 1/4 when it points straight at it.
fn light_weight(lambda: Complex64, z: Complex64, c: Complex64) -> f64 {
    let cos = (lambda * (z - c)).re / (lambda.norm() * (z - c).norm());
    (cos - 0.5).max(0.0).powi(2)
}

/// Extracts `F|∂X` from `log ψ/λ′` along the ladder.
///
/// Parameters sharing a modulus form one rung. On the first rung the branch
/// of `log m` is unwound around the boundary, which must close; later rungs
/// take the branch nearest the previous estimate node by node, so that the
/// dark side, where `m` is lost to rounding at large `|λ|`, cannot break the
/// continuation on the lit side. Each direction keeps the `λ′`
/// of its disk whose quotient is closest, over the nodes it lights, to the
/// previous rung's estimate (the identity before the first rung). The
/// directions are then blended with weights that vanish on the dark side.
pub fn recover_f_boundary(trace: &CgoTrace, opts: &RecoveryOptions) -> Result<BoundaryMap> {
    let nodes = &trace.nodes;
    let n = nodes.len();
    let c = crate::forward::boundary::star_center(nodes);
    let mut rungs: Vec<f64> = trace.params.params.iter().map(|p| p.lambda.norm()).collect();
    rungs.sort_by(f64::total_cmp);
    rungs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    let mut estimate = nodes.clone();
    let mut ladder = Vec::new();
    for &modulus in &rungs {
        let dirs: Vec<usize> = (0..trace.params.params.len())
            .filter(|&i| (trace.params.params[i].lambda.norm() - modulus).abs() <= 1e-9 * modulus)
            .filter(|&i| trace.entries.iter().any(|e| e.param == i))
            .collect();
        if dirs.is_empty() {
            continue;
        }
        let mut num = vec![Complex64::new(0.0, 0.0); n];
        let mut den = vec![0.0; n];
        // fallback for nodes no direction lights within 60°
        let mut brightest = vec![(f64::NEG_INFINITY, Complex64::new(0.0, 0.0)); n];
        for &d in &dirs {
            let centre = trace.params.params[d].lambda;
            let w: Vec<f64> = nodes.iter().map(|z| light_weight(centre, *z, c)).collect();
            let mut best: Option<(f64, Vec<Complex64>)> = None;
            for e in trace.entries.iter().filter(|e| e.param == d) {
                let m = e.reduced(nodes);
                let anchor = (0..n)
                    .max_by(|&a, &b| e.psi[a].norm().total_cmp(&e.psi[b].norm()))
                    .expect("boundary is nonempty");
                let logm = if ladder.is_empty() {
                    unwound_log(&m, anchor, e.lambda * (estimate[anchor] - nodes[anchor]))?
                } else {
                    nearest_log(&m, e.lambda, &estimate, nodes)
                };
                let q: Vec<Complex64> = logm.iter().zip(nodes).map(|(l, z)| z + l / e.lambda).collect();
                let dist: f64 = (0..n).map(|j| w[j] * (q[j] - estimate[j]).norm_sqr()).sum();
                if best.as_ref().map_or(true, |(b, _)| dist < *b) {
                    best = Some((dist, q));
                }
            }
            let (_, q) = best.expect("each direction has a sample");
            for j in 0..n {
                num[j] += w[j] * q[j];
                den[j] += w[j];
                let lit = (centre * (nodes[j] - c)).re / centre.norm();
                if lit > brightest[j].0 {
                    brightest[j] = (lit, q[j]);
                }
            }
        }
        let next: Vec<Complex64> =
            (0..n).map(|j| if den[j] > 0.0 { num[j] / den[j] } else { brightest[j].1 }).collect();
        if !ladder.is_empty() {
            let change = sup_dist(&next, &estimate);
            if change > opts.tol {
                return Err(Error::NoConvergence(format!(
                    "ladder estimates at |λ| = {modulus} moved by {change:.3e}, above {:.3e}",
                    opts.tol
                )));
            }
        }
        ladder.push((modulus, next.clone()));
        estimate = next;
    }
    if ladder.is_empty() {
        return Err(Error::NoConvergence("every spectral parameter was skipped".into()));
    }
    Ok(BoundaryMap { nodes: nodes.clone(), values: estimate, ladder })
}

/// Least-squares slope of `log err` against `log(log λ / λ)`.
pub fn decay_exponent(errors: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = errors.iter().map(|(l, e)| ((l.ln() / l).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
