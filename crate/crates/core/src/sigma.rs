//! Isotropic conductivity from boundary data.
//!
//! [`scattering_data`] evaluates the boundary functional
//! `∮ e^{−λ̄z̄} ∂̄ψ dz̄ = (1/2i) ∮ e^{−λ̄z̄} (Λσ − Λ₀)ψ ds`.
//!
//! [`reconstruct_sigma`] fits `s = e^x` on a grid by Gauss–Newton on
//!
//! ```text
//! Q(x) = ½‖S(s) − S_data‖²_F / ν² + α Σ_edges (s_a − s_b)²,
//! ```
//!
//! where `S = WΛ` is the energy form of the DtN map and `ν = ‖S_data − S(1)‖_F`
//! is the residual at the starting point. The relative misfit is
//! `‖S(s) − S_data‖_F / ν`. The Jacobian is never
//! formed: with `U` the discrete harmonic extensions, `dS = Uᵀ dA U`, and the
//! adjoint gives `∂Q/∂s_t = ⟨U_tᵀ K_t U_t, R⟩_F` per triangle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgo::TraceEntry;
use crate::fields::{Grid2D, TensorField};
use crate::forward::{BoundaryDiscretization, DtnMatrix, Fem, Harmonic, MeshOptions, RingMesh};
use crate::linalg::{dot, Csr};
use crate::{Error, Result};

/// `∮ e^{−λ̄z̄} ∂̄ψ dz̄` at one spectral parameter.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScatteringSample {
    pub lambda: Complex64,
    pub value: Complex64,
}

/// Scattering value from `Λσ`, `Λ₀` and the trace of `ψ` at `psi.lambda`.
pub fn scattering_data(lam: &DtnMatrix, lam0: &DtnMatrix, psi: &TraceEntry) -> Result<ScatteringSample> {
    lam.check_convention(lam0)?;
    scattering_from_difference(&lam.bd, &(&lam.data - &lam0.data), psi)
}

/// As [`scattering_data`] with `Λσ − Λ₀` given directly.
pub fn scattering_from_difference(bd: &BoundaryDiscretization, diff: &DMatrix<f64>, psi: &TraceEntry) -> Result<ScatteringSample> {
    let n = bd.len();
    if psi.psi.len() != n || diff.nrows() != n {
        return Err(Error::Validation("trace and DtN live on different boundaries".into()));
    }
    let mut value = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let phi = (-(psi.lambda * bd.nodes[i]).conj()).exp();
        let row: Complex64 = (0..n).map(|j| diff[(i, j)] * psi.psi[j]).sum();
        value += phi * bd.weights[i] * row;
    }
    if !value.is_finite() {
        return Err(Error::SolveFailure("scattering value is not finite".into()));
    }
    Ok(ScatteringSample { lambda: psi.lambda, value: value / Complex64::new(0.0, 2.0) })
}

/// `Λσ` from a forward solve on a mesh refined twice in each direction,
/// restricted to the boundary nodes of `bd`.
///
/// Boundary functions on `bd` are extended piecewise linearly to the refined
/// boundary, so the result is the energy form `PᵀS_fP` of an independent
/// discretization.
pub fn dtn_refined(sigma: &dyn TensorField, bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<DtnMatrix> {
    let nb = bd.len();
    let fine = BoundaryDiscretization::smooth(refine_closed(&bd.nodes))?;
    let fem = Fem::new(RingMesh::build(&fine, MeshOptions { rings: 2 * opts.rings, min_ring: 2 * opts.min_ring })?);
    let sf = fem.harmonic(&fem.assemble(&fem.sample(sigma)))?.schur;
    let mut p = DMatrix::<f64>::zeros(2 * nb, nb);
    for k in 0..nb {
        p[(2 * k, k)] = 1.0;
        p[(2 * k + 1, k)] = 0.5;
        p[(2 * k + 1, (k + 1) % nb)] = 0.5;
    }
    let s = p.transpose() * sf * p;
    Ok(DtnMatrix::from_energy(bd.clone(), &s))
}

/// Trigonometric interpolation of a closed curve at the midpoints of its samples.
fn refine_closed(z: &[Complex64]) -> Vec<Complex64> {
    let n = z.len();
    let mut planner = rustfft::FftPlanner::new();
    let mut buf = z.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut wide = vec![Complex64::new(0.0, 0.0); 2 * n];
    for k in 0..n {
        let m = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
        let v = if n % 2 == 0 && k == n / 2 { buf[k] * 0.5 } else { buf[k] };
        wide[m.rem_euclid(2 * n as i64) as usize] += v;
        if n % 2 == 0 && k == n / 2 {
            wide[(2 * n) - k] += v;
        }
    }
    planner.plan_fft_inverse(2 * n).process(&mut wide);
    wide.iter().map(|v| v / n as f64).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaOptions {
    pub alpha_ladder: Vec<f64>,
    /// Total Gauss–Newton iterations over the whole ladder.
    pub max_iter: usize,
    /// Target relative misfit `‖S(s) − S_data‖_F / ‖S_data − S(1)‖_F`.
    pub tol: f64,
    pub cg_iter: usize,
    /// Iterates stay in `[s_min, 1/s_min]`.
    pub s_min: f64,
    pub rings: usize,
    pub min_ring: usize,
    /// Cells of the parameter grid along the longer side of the output grid;
    /// 0 puts one unknown in every output cell.
    pub param_cells: usize,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions {
            alpha_ladder: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            max_iter: 50,
            tol: 1e-4,
            cg_iter: 30,
            s_min: 1e-3,
            rings: 32,
            min_ring: 32,
            param_cells: 32,
        }
    }
}

impl SigmaOptions {
    pub fn mesh(&self) -> MeshOptions {
        MeshOptions { rings: self.rings, min_ring: self.min_ring }
    }

    /// Grid carrying the unknowns for the output grid `grid`.
    pub fn parameter_grid(&self, grid: &Grid2D) -> Result<Grid2D> {
        let side = grid.nx.max(grid.ny);
        if self.param_cells == 0 || self.param_cells >= side {
            return Ok(grid.clone());
        }
        let h = side as f64 * grid.h / self.param_cells as f64;
        let nx = ((grid.nx as f64 * grid.h / h).ceil() as usize).max(2);
        let ny = ((grid.ny as f64 * grid.h / h).ceil() as usize).max(2);
        Grid2D::new(grid.origin, h, nx, ny, grid.domain.clone())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub alpha: f64,
    /// Relative data misfit after the step.
    pub misfit: f64,
    pub objective: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MisfitReport {
    pub initial_misfit: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl MisfitReport {
    pub fn final_misfit(&self) -> f64 {
        self.history.last().map_or(self.initial_misfit, |r| r.misfit)
    }
}

/// Reconstructed isotropic conductivity on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaReconstruction {
    pub grid: Grid2D,
    /// Cell values; cells no triangle touches stay at 1.
    pub s: Vec<f64>,
    pub report: MisfitReport,
}

impl SigmaReconstruction {
    /// `‖s − truth‖₂ / ‖truth‖₂` over the masked cells.
    pub fn relative_l2(&self, truth: &dyn Fn(Complex64) -> f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..self.grid.len() {
            if self.grid.in_mask(k) {
                let t = truth(self.grid.center_of(k));
                num += (self.s[k] - t).powi(2);
                den += t * t;
            }
        }
        (num / den).sqrt()
    }
}

/// The discretized output-least-squares problem.
pub struct SigmaProblem {
    pub fem: Fem,
    /// Output grid.
    pub grid: Grid2D,
    /// Grid whose cell values are the unknowns.
    pub params: Grid2D,
    data: DMatrix<f64>,
    /// `‖S_data − S(1)‖_F`.
    scale: f64,
    /// Parameter-grid cell of each unknown.
    pub cells: Vec<usize>,
    /// Bilinear weights of each triangle centroid over the unknowns.
    interp: Vec<[(usize, f64); 4]>,
    unit: Vec<[[f64; 3]; 3]>,
    edges: Vec<(usize, usize)>,
}

/// Forward state at one iterate.
pub struct State {
    pub s: Vec<f64>,
    pub tri: Vec<f64>,
    pub harmonic: Harmonic,
    /// `Uᵀ`, so that nodal rows of `U` are contiguous columns.
    ut: DMatrix<f64>,
    pub residual: DMatrix<f64>,
}

impl SigmaProblem {
    /// Fits `S(s)` to the energy form of `lam`.
    pub fn new(lam: &DtnMatrix, grid: &Grid2D, opts: &SigmaOptions) -> Result<Self> {
        check_dtn(lam)?;
        let fem = Fem::new(RingMesh::build(&lam.bd, opts.mesh())?);
        Self::build(fem, lam.energy(), grid, opts.parameter_grid(grid)?)
    }

    /// Fits `S(s) − S(1)` to the energy form of `lam − lam0`, so that a
    /// discretization bias shared by the two measured maps cancels.
    pub fn with_reference(lam: &DtnMatrix, lam0: &DtnMatrix, grid: &Grid2D, opts: &SigmaOptions) -> Result<Self> {
        check_dtn(lam)?;
        check_dtn(lam0)?;
        lam.check_convention(lam0)?;
        let fem = Fem::new(RingMesh::build(&lam.bd, opts.mesh())?);
        let data = model_at_one(&fem)? + lam.energy() - lam0.energy();
        Self::build(fem, data, grid, opts.parameter_grid(grid)?)
    }

    fn build(fem: Fem, data: DMatrix<f64>, grid: &Grid2D, params: Grid2D) -> Result<Self> {
        let mut scale = (&data - model_at_one(&fem)?).norm();
        if !(scale > 1e-12 * data.norm()) {
            scale = data.norm().max(f64::MIN_POSITIVE);
        }
        let mut var = vec![usize::MAX; params.len()];
        let mut cells = Vec::new();
        let mut interp = Vec::with_capacity(fem.n_tris());
        for t in 0..fem.n_tris() {
            let z = fem.mesh.centroid(t);
            let w = params
                .interp_weights(z)
                .ok_or_else(|| Error::Validation(format!("grid does not cover the mesh point {z}")))?;
            let mut row = [(0, 0.0); 4];
            for (slot, (cell, wt)) in row.iter_mut().zip(w) {
                if var[cell] == usize::MAX {
                    var[cell] = cells.len();
                    cells.push(cell);
                }
                *slot = (var[cell], wt);
            }
            interp.push(row);
        }
        let mut edges = Vec::new();
        for (v, &cell) in cells.iter().enumerate() {
            let (i, j) = (cell % params.nx, cell / params.nx);
            if i + 1 < params.nx && var[cell + 1] != usize::MAX {
                edges.push((v, var[cell + 1]));
            }
            if j + 1 < params.ny && var[cell + params.nx] != usize::MAX {
                edges.push((v, var[cell + params.nx]));
            }
        }
        let unit = (0..fem.n_tris()).map(|t| fem.element(t, [1.0, 0.0, 1.0])).collect();
        Ok(SigmaProblem { fem, grid: grid.clone(), params, data, scale, cells, interp, unit, edges })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn tri_values(&self, s: &[f64]) -> Vec<f64> {
        self.interp.iter().map(|w| w.iter().map(|(v, wt)| wt * s[*v]).sum()).collect()
    }

    pub fn state(&self, x: &[f64]) -> Result<State> {
        let s: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let tri = self.tri_values(&s);
        let a = self.fem.assemble(&tri.iter().map(|v| [*v, 0.0, *v]).collect::<Vec<_>>());
        let harmonic = self.fem.harmonic(&a)?;
        let residual = &harmonic.schur - &self.data;
        let ut = harmonic.ext.transpose();
        Ok(State { s, tri, harmonic, ut, residual })
    }

    pub fn regularization(&self, s: &[f64]) -> f64 {
        self.edges.iter().map(|&(a, b)| (s[a] - s[b]).powi(2)).sum()
    }

    pub fn objective(&self, st: &State, alpha: f64) -> f64 {
        0.5 * st.residual.norm_squared() / (self.scale * self.scale) + alpha * self.regularization(&st.s)
    }

    pub fn relative_misfit(&self, st: &State) -> f64 {
        st.residual.norm() / self.scale
    }

    /// `dS` for a perturbation `dx` of the unknowns.
    pub fn jvp(&self, st: &State, dx: &[f64]) -> DMatrix<f64> {
        let ds: Vec<f64> = dx.iter().zip(&st.s).map(|(d, s)| d * s).collect();
        let dtri = self.tri_values(&ds);
        let mut trip = Vec::with_capacity(9 * dtri.len());
        for (t, tri) in self.fem.mesh.tris.iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    trip.push((tri[a], tri[b], dtri[t] * self.unit[t][a][b]));
                }
            }
        }
        let da = Csr::from_triplets(self.fem.n_nodes(), trip);
        let ut = &st.ut;
        let mut tt = DMatrix::<f64>::zeros(ut.nrows(), ut.ncols());
        for i in 0..self.fem.n_nodes() {
            let mut col = tt.column_mut(i);
            for (c, v) in da.row(i) {
                col.axpy(v, &ut.column(c), 1.0);
            }
        }
        ut * tt.transpose()
    }

    /// `Jᵀ R` for a symmetric matrix `R` of the size of `S`.
    pub fn vjp(&self, st: &State, r: &DMatrix<f64>) -> Vec<f64> {
        let ut = &st.ut;
        let vt = r * ut;
        let mut g = vec![0.0; self.len()];
        for (t, tri) in self.fem.mesh.tris.iter().enumerate() {
            let mut gt = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let k = self.unit[t][a][b];
                    if k != 0.0 {
                        gt += k * dot(vt.column(tri[a]).as_slice(), ut.column(tri[b]).as_slice());
                    }
                }
            }
            for &(var, wt) in &self.interp[t] {
                g[var] += wt * gt;
            }
        }
        g.iter_mut().zip(&st.s).for_each(|(g, s)| *g *= s);
        g
    }

    /// `∇_x Q`.
    pub fn gradient(&self, st: &State, alpha: f64) -> Vec<f64> {
        let mut g = self.vjp(st, &(&st.residual / (self.scale * self.scale)));
        for &(a, b) in &self.edges {
            let d = 2.0 * alpha * (st.s[a] - st.s[b]);
            g[a] += d * st.s[a];
            g[b] -= d * st.s[b];
        }
        g
    }

    /// Gauss–Newton Hessian applied to `v`.
    fn hessian(&self, st: &State, alpha: f64, v: &[f64]) -> Vec<f64> {
        let jv = self.jvp(st, v) / (self.scale * self.scale);
        let mut h = self.vjp(st, &jv);
        for &(a, b) in &self.edges {
            let d = 2.0 * alpha * (st.s[a] * v[a] - st.s[b] * v[b]);
            h[a] += d * st.s[a];
            h[b] -= d * st.s[b];
        }
        h
    }

    /// Diagonal of the Gauss–Newton Hessian, each column `J e_v` assembled
    /// from the triangles that unknown `v` touches.
    pub fn hessian_diagonal(&self, st: &State, alpha: f64) -> Vec<f64> {
        let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.len()];
        for (t, row) in self.interp.iter().enumerate() {
            for &(v, w) in row {
                if w != 0.0 {
                    by_var[v].push((t, w));
                }
            }
        }
        let inv = 1.0 / (self.scale * self.scale);
        let mut diag: Vec<f64> = by_var
            .par_iter()
            .enumerate()
            .map(|(v, tris)| {
                let mut nodes: Vec<usize> = tris.iter().flat_map(|(t, _)| self.fem.mesh.tris[*t]).collect();
                nodes.sort_unstable();
                nodes.dedup();
                let m = nodes.len();
                let mut da = DMatrix::<f64>::zeros(m, m);
                for &(t, w) in tris {
                    let tri = self.fem.mesh.tris[t];
                    let loc = tri.map(|g| nodes.binary_search(&g).expect("node of a touched triangle"));
                    for a in 0..3 {
                        for b in 0..3 {
                            da[(loc[a], loc[b])] += w * st.s[v] * self.unit[t][a][b];
                        }
                    }
                }
                let u = DMatrix::<f64>::from_fn(st.ut.nrows(), m, |i, k| st.ut[(i, nodes[k])]);
                (&u * da * u.transpose()).norm_squared() * inv
            })
            .collect();
        for &(a, b) in &self.edges {
            diag[a] += 2.0 * alpha * st.s[a] * st.s[a];
            diag[b] += 2.0 * alpha * st.s[b] * st.s[b];
        }
        diag
    }

    /// Solves `H p = −g` by Jacobi-preconditioned conjugate gradients.
    pub fn gauss_newton_step(&self, st: &State, alpha: f64, g: &[f64], iters: usize) -> Vec<f64> {
        let n = g.len();
        let diag = self.hessian_diagonal(st, alpha);
        let precond = |r: &[f64]| -> Vec<f64> {
            r.iter().zip(&diag).map(|(r, d)| if *d > 0.0 { r / d } else { *r }).collect()
        };
        let mut p = vec![0.0; n];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut z = precond(&r);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let r0 = dot(&r, &r).sqrt();
        for _ in 0..iters {
            let hd = self.hessian(st, alpha, &d);
            let dhd = dot(&d, &hd);
            if !(dhd > 0.0) {
                break;
            }
            let a = rz / dhd;
            for i in 0..n {
                p[i] += a * d[i];
                r[i] -= a * hd[i];
            }
            if dot(&r, &r).sqrt() <= 1e-3 * r0 {
                break;
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                d[i] = z[i] + beta * d[i];
            }
        }
        p
    }

    /// Values at the output cell centres, with 1 outside the mask and in
    /// parameter cells that carry no unknown.
    pub fn to_grid(&self, s: &[f64]) -> Vec<f64> {
        let mut full = vec![1.0; self.params.len()];
        for (v, &cell) in self.cells.iter().enumerate() {
            full[cell] = s[v];
        }
        (0..self.grid.len())
            .map(|k| {
                if !self.grid.in_mask(k) {
                    return 1.0;
                }
                match self.params.interp_weights(self.grid.center_of(k)) {
                    Some(w) => w.iter().map(|(c, wt)| wt * full[*c]).sum(),
                    None => 1.0,
                }
            })
            .collect()
    }
}

fn model_at_one(fem: &Fem) -> Result<DMatrix<f64>> {
    Ok(fem.harmonic(&fem.assemble(&vec![[1.0, 0.0, 1.0]; fem.n_tris()]))?.schur)
}

fn check_dtn(lam: &DtnMatrix) -> Result<()> {
    if lam.asymmetry() > 1e-8 {
        return Err(Error::Validation("DtN energy form is not symmetric".into()));
    }
    let scale = lam.data.amax().max(f64::MIN_POSITIVE);
    if lam.kernel_defect() > 1e-8 * scale * lam.len() as f64 {
        return Err(Error::Validation("DtN map does not annihilate constants".into()));
    }
    Ok(())
}

fn check_options(opts: &SigmaOptions) -> Result<()> {
    if opts.alpha_ladder.is_empty() || opts.alpha_ladder.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::Validation("regularization ladder must be nonempty and nonnegative".into()));
    }
    Ok(())
}

/// Gauss–Newton fit of an isotropic conductivity to `Λσ`, starting from `s ≡ 1`.
pub fn reconstruct_sigma(lam: &DtnMatrix, grid: &Grid2D, opts: &SigmaOptions) -> Result<SigmaReconstruction> {
    check_options(opts)?;
    solve(&SigmaProblem::new(lam, grid, opts)?, opts)
}

/// As [`reconstruct_sigma`], fitting the difference `Λσ − Λ₀` of two maps
/// measured in the same discretization.
pub fn reconstruct_sigma_difference(
    lam: &DtnMatrix,
    lam0: &DtnMatrix,
    grid: &Grid2D,
    opts: &SigmaOptions,
) -> Result<SigmaReconstruction> {
    check_options(opts)?;
    solve(&SigmaProblem::with_reference(lam, lam0, grid, opts)?, opts)
}

/// Largest change of `log s` in one cell per Gauss–Newton step.
const MAX_LOG_STEP: f64 = 1.0;

fn solve(prob: &SigmaProblem, opts: &SigmaOptions) -> Result<SigmaReconstruction> {
    let grid = &prob.grid;
    let mut x = vec![0.0; prob.len()];
    let mut st = prob.state(&x)?;
    let initial_misfit = prob.relative_misfit(&st);
    let mut history = Vec::new();
    let mut converged = initial_misfit <= opts.tol;
    let per_rung = opts.max_iter.div_ceil(opts.alpha_ladder.len());
    'ladder: for (rung, &alpha) in opts.alpha_ladder.iter().enumerate() {
        if converged {
            break;
        }
        let budget = (per_rung * (rung + 1)).min(opts.max_iter);
        let mut q = prob.objective(&st, alpha);
        loop {
            if history.len() >= opts.max_iter {
                break 'ladder;
            }
            if history.len() >= budget {
                break;
            }
            let g = prob.gradient(&st, alpha);
            let mut p = prob.gauss_newton_step(&st, alpha, &g, opts.cg_iter);
            let longest = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if longest > MAX_LOG_STEP {
                p.iter_mut().for_each(|v| *v *= MAX_LOG_STEP / longest);
            }
            let slope = dot(&g, &p);
            if !(slope < 0.0) {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            let mut positive = false;
            for _ in 0..12 {
                let trial: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x + step * p).collect();
                if trial.iter().all(|v| v.exp() >= opts.s_min && v.exp() <= 1.0 / opts.s_min) {
                    positive = true;
                    let ts = prob.state(&trial)?;
                    let tq = prob.objective(&ts, alpha);
                    if tq <= q + 1e-4 * step * slope {
                        accepted = Some((trial, ts, tq));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, ts, tq)) = accepted else {
                if !positive {
                    return Err(Error::NonPositive);
                }
                break;
            };
            let decrease = (q - tq) / q.max(f64::MIN_POSITIVE);
            x = trial;
            st = ts;
            q = tq;
            let misfit = prob.relative_misfit(&st);
            history.push(IterationRecord { alpha, misfit, objective: q, step });
            if misfit <= opts.tol {
                converged = true;
                break 'ladder;
            }
            if decrease < 1e-3 {
                break;
            }
        }
    }
    if history.is_empty() && !converged {
        return Err(Error::Stagnation { misfit: initial_misfit });
    }
    let s = prob.to_grid(&st.s);
    Ok(SigmaReconstruction { grid: grid.clone(), s, report: MisfitReport { initial_misfit, history, converged } })
}
