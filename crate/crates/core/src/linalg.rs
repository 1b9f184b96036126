//! Sparse and dense kernels shared by the solvers.

use num_complex::Complex64;

use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Csr { n, indptr, indices, data }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }
}

/// Envelope (skyline) Cholesky factor of a symmetric positive definite matrix.
///
/// Row `i` stores `L[i, first[i]..=i]` contiguously.
pub struct Envelope {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
}

impl Envelope {
    /// Factors the principal submatrix of `a` on `idx` (in that order).
    pub fn factor(a: &Csr, idx: &[usize]) -> Result<Self> {
        let n = idx.len();
        let mut pos = vec![usize::MAX; a.n];
        for (p, &g) in idx.iter().enumerate() {
            pos[g] = p;
        }
        let mut first = vec![0; n];
        for (p, &g) in idx.iter().enumerate() {
            first[p] = a.row(g).filter_map(|(j, _)| (pos[j] != usize::MAX).then_some(pos[j])).filter(|&q| q <= p).min().unwrap_or(p);
        }
        // keep the envelope monotone so that row segments overlap cleanly
        let mut start = vec![0; n + 1];
        for p in 0..n {
            start[p + 1] = start[p] + (p - first[p] + 1);
        }
        let mut l = vec![0.0; start[n]];
        for (p, &g) in idx.iter().enumerate() {
            for (j, v) in a.row(g) {
                let q = pos[j];
                if q != usize::MAX && q <= p {
                    l[start[p] + q - first[p]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (ri, rj) = (start[i], start[j]);
                let mut s = l[ri + j - fi];
                let a_i = &l[ri + k0 - fi..ri + j - fi];
                let a_j = &l[rj + k0 - fj..rj + j - fj];
                s -= dot(a_i, a_j);
                l[ri + j - fi] = s / l[rj + j - fj];
            }
            let ri = start[i];
            let row = &l[ri..ri + i - fi];
            let d = l[ri + i - fi] - dot(row, row);
            if !(d > 0.0) {
                return Err(Error::SolverDivergence(format!("matrix not positive definite at pivot {i}")));
            }
            l[ri + i - fi] = d.sqrt();
        }
        Ok(Envelope { n, first, start, l })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solves in place, skipping the leading zeros of `b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let lead = b.iter().position(|&v| v != 0.0).unwrap_or(n);
        for i in lead..n {
            let fi = self.first[i];
            let k0 = fi.max(lead);
            let ri = self.start[i];
            let s = dot(&self.l[ri + k0 - fi..ri + i - fi], &b[k0..i]);
            b[i] = (b[i] - s) / self.l[ri + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.start[i];
            b[i] /= self.l[ri + i - fi];
            let xi = b[i];
            for (k, lv) in (fi..i).zip(&self.l[ri..ri + i - fi]) {
                b[k] -= lv * xi;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let n = a.len();
    let chunks = n / 4;
    for c in 0..chunks {
        for q in 0..4 {
            s[q] += a[4 * c + q] * b[4 * c + q];
        }
    }
    let mut t = s[0] + s[1] + s[2] + s[3];
    for k in 4 * chunks..n {
        t += a[k] * b[k];
    }
    t
}

/// Jacobi-preconditioned conjugate gradients on the principal submatrix `idx`.
pub fn pcg(a: &Csr, idx: &[usize], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = idx.len();
    let mut pos = vec![usize::MAX; a.n];
    for (p, &g) in idx.iter().enumerate() {
        pos[g] = p;
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        idx.iter()
            .map(|&g| a.row(g).filter(|&(j, _)| pos[j] != usize::MAX).map(|(j, v)| v * x[pos[j]]).sum())
            .collect()
    };
    let diag: Vec<f64> = idx.iter().map(|&g| a.get(g, g)).collect();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol * bn {
            return Ok(x);
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverDivergence(format!("conjugate gradients stalled after {max_iter} iterations")))
}

/// Row-major complex LU with partial pivoting.
pub struct ComplexLu {
    n: usize,
    a: Vec<Complex64>,
    piv: Vec<usize>,
    norm1: f64,
}

impl ComplexLu {
    /// Factors the row-major `n×n` matrix `a`.
    pub fn factor(n: usize, mut a: Vec<Complex64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let norm1 = (0..n).map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max);
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, a[i * n + k].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SolveFailure(format!("singular pivot at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let inv = 1.0 / a[k * n + k];
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n + k + 1..k * n + n];
            for row in bottom.chunks_mut(n) {
                let m = row[k] * inv;
                row[k] = m;
                if m != Complex64::new(0.0, 0.0) {
                    for (x, &u) in row[k + 1..].iter_mut().zip(pivot_row) {
                        *x -= m * u;
                    }
                }
            }
        }
        Ok(ComplexLu { n, a, piv, norm1 })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.a[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&x[..i]).map(|(l, x)| l * x).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.a[i * n + i + 1..i * n + n];
            let s: Complex64 = row.iter().zip(&x[i + 1..]).map(|(u, x)| u * x).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        x
    }

    /// Solves `Aᴴ x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y = b.to_vec();
        // Uᴴ y = b
        for i in 0..n {
            y[i] /= self.a[i * n + i].conj();
            let yi = y[i];
            for j in i + 1..n {
                y[j] -= self.a[i * n + j].conj() * yi;
            }
        }
        // Lᴴ z = y
        for i in (0..n).rev() {
            let zi = y[i];
            for j in 0..i {
                y[j] -= self.a[i * n + j].conj() * zi;
            }
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (k, &p) in self.piv.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    pub fn cond1(&self) -> f64 {
        let n = self.n;
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve(&x);
            let ny: f64 = y.iter().map(|v| v.norm()).sum();
            if iter > 0 && ny <= est {
                break;
            }
            est = ny;
            let xi: Vec<Complex64> =
                y.iter().map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) }).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z.iter().enumerate().map(|(j, v)| (j, v.norm())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(z, x)| (z.conj() * x).re).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![Complex64::new(0.0, 0.0); n];
            x[j] = Complex64::new(1.0, 0.0);
        }
        est * self.norm1
    }
}
