//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use qcit::cgo::faddeev_kernel;
use rustfft::FftPlanner;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Restarted GMRES for a complex linear operator.
fn gmres(op: &dyn Fn(&[Complex64]) -> Vec<Complex64>, b: &[Complex64], tol: f64) -> Vec<Complex64> {
    let n = b.len();
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let bn = norm(b);
    let mut x = vec![c(0.0, 0.0); n];
    for _ in 0..20 {
        let ax = op(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * bn {
            break;
        }
        let m = 60;
        let mut v = vec![r.iter().map(|x| x / beta).collect::<Vec<_>>()];
        let mut h = vec![vec![c(0.0, 0.0); m]; m + 1];
        let mut cs = vec![c(0.0, 0.0); m];
        let mut sn = vec![c(0.0, 0.0); m];
        let mut g = vec![c(0.0, 0.0); m + 1];
        g[0] = c(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut w = op(&v[k]);
            for i in 0..=k {
                let hik: Complex64 = v[i].iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hik * vj;
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = c(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k].norm_sqr() + h[k + 1][k].norm_sqr()).sqrt();
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = c(den, 0.0);
            h[k + 1][k] = c(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if g[k + 1].norm() <= tol * bn || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        let mut y = vec![c(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xj, vj) in x.iter_mut().zip(&v[i]) {
                *xj += yi * vj;
            }
        }
    }
    x
}

fn fft2(buf: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in buf.chunks_mut(n) {
        plan.process(row);
    }
    let mut col = vec![c(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = buf[j * n + i];
        }
        plan.process(&mut col);
        for j in 0..n {
            buf[j * n + i] = col[j];
        }
    }
}

/// CGO solution for an isotropic radial conductivity from the interior equation
/// `ψ̃ = e^{λz} + Φ_λ ∗ (q ψ̃)`, `ψ̃ = √σ ψ`, `q = Δ√σ/√σ`, on a grid covering `supp q`.
pub struct Interior {
    pub lambda: Complex64,
    pts: Vec<Complex64>,
    /// `q ψ̃ h²` per cell.
    source: Vec<Complex64>,
}

impl Interior {
    pub fn solve(sqrt_sigma: &dyn Fn(f64) -> f64, lambda: Complex64) -> Self {
        let n = 128;
        let half = 0.65;
        let h = 2.0 * half / n as f64;
        let pt = |i: usize, j: usize| c(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
        let dr = 1e-4;
        let q: Vec<f64> = (0..n * n)
            .map(|k| {
                let r = pt(k % n, k / n).norm();
                let f = sqrt_sigma(r);
                let f2 = (sqrt_sigma(r + dr) - 2.0 * f + sqrt_sigma(r - dr)) / (dr * dr);
                let f1 = (sqrt_sigma(r + dr) - sqrt_sigma(r - dr)) / (2.0 * dr);
                (f2 + f1 / r) / f
            })
            .collect();
        // kernel on the doubled grid, cell-averaged at the origin
        let m = 2 * n;
        let mut ker = vec![c(0.0, 0.0); m * m];
        for j in 0..m {
            for i in 0..m {
                let di = if i < n { i as f64 } else { i as f64 - m as f64 };
                let dj = if j < n { j as f64 } else { j as f64 - m as f64 };
                let v = if i == 0 && j == 0 {
                    (0.5772156649015329 + lambda.norm().ln() + h.ln() - 1.0611754268825243)
                        / (2.0 * PI)
                } else {
                    faddeev_kernel(c(di * h, dj * h), lambda)
                };
                ker[j * m + i] = c(v * h * h, 0.0);
            }
        }
        fft2(&mut ker, m, false);
        let conv = |u: &[Complex64]| -> Vec<Complex64> {
            let mut buf = vec![c(0.0, 0.0); m * m];
            for j in 0..n {
                for i in 0..n {
                    buf[j * m + i] = u[j * n + i] * q[j * n + i];
                }
            }
            fft2(&mut buf, m, false);
            for (b, k) in buf.iter_mut().zip(&ker) {
                *b *= k;
            }
            fft2(&mut buf, m, true);
            (0..n * n)
                .map(|k| buf[(k / n) * m + k % n] / (m * m) as f64)
                .collect()
        };
        let e: Vec<Complex64> = (0..n * n)
            .map(|k| (lambda * pt(k % n, k / n)).exp())
            .collect();
        let op = |u: &[Complex64]| -> Vec<Complex64> {
            u.iter().zip(conv(u)).map(|(a, b)| a - b).collect()
        };
        let u = gmres(&op, &e, 1e-12);
        let mut pts = Vec::new();
        let mut source = Vec::new();
        for k in 0..n * n {
            if q[k] != 0.0 {
                pts.push(pt(k % n, k / n));
                source.push(q[k] * u[k] * h * h);
            }
        }
        Interior {
            lambda,
            pts,
            source,
        }
    }

    /// `ψ` at points outside `supp q`.
    pub fn psi(&self, z: &[Complex64]) -> Vec<Complex64> {
        z.iter()
            .map(|z| {
                let mut s = (self.lambda * z).exp();
                for (w, f) in self.pts.iter().zip(&self.source) {
                    s += faddeev_kernel(z - w, self.lambda) * f;
                }
                s
            })
            .collect()
    }

    /// `∂̄ψ` outside `supp q`, using `∂̄Φ_λ(z) = e^{λ̄z̄}/(4π z̄)`.
    pub fn dbar_psi(&self, z: &[Complex64]) -> Vec<Complex64> {
        z.iter()
            .map(|z| {
                let mut s = Complex64::new(0.0, 0.0);
                for (w, f) in self.pts.iter().zip(&self.source) {
                    let d = (z - w).conj();
                    s += (self.lambda.conj() * d).exp() / (4.0 * PI * d) * f;
                }
                s
            })
            .collect()
    }
}
