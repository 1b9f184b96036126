use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::fem::symmetrize;
use super::{BoundaryDiscretization, Fem, MeshOptions, RingMesh};
use crate::fields::TensorField;
use crate::linalg::Csr;
use crate::{Error, Result};

/// Tag of the flux convention: `(σ∇u)·ν` per unit arclength.
pub const FLUX_DENSITY: &str = "flux-density";

/// Dense DtN matrix `Λ` acting on nodal Dirichlet values.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    pub bd: BoundaryDiscretization,
    pub data: DMatrix<f64>,
    pub convention: String,
}

impl DtnMatrix {
    pub fn new(bd: BoundaryDiscretization, data: DMatrix<f64>) -> Self {
        DtnMatrix { bd, data, convention: FLUX_DENSITY.to_string() }
    }

    /// `Λ = W⁻¹ S` from an energy matrix `S`.
    pub fn from_energy(bd: BoundaryDiscretization, s: &DMatrix<f64>) -> Self {
        let mut data = s.clone();
        for (i, mut row) in data.row_iter_mut().enumerate() {
            row /= bd.weights[i];
        }
        Self::new(bd, data)
    }

    /// `W Λ`, the symmetric energy form.
    pub fn energy(&self) -> DMatrix<f64> {
        let mut s = self.data.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row *= self.bd.weights[i];
        }
        s
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = &self.data * nalgebra::DVector::from_column_slice(f);
        v.as_slice().to_vec()
    }

    pub fn apply_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = f.iter().map(|z| z.re).collect();
        let im: Vec<f64> = f.iter().map(|z| z.im).collect();
        self.apply(&re).into_iter().zip(self.apply(&im)).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    /// `max |Λ·1|`.
    pub fn kernel_defect(&self) -> f64 {
        self.data.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }

    /// Largest asymmetry of `WΛ` relative to its largest entry.
    pub fn asymmetry(&self) -> f64 {
        let s = self.energy();
        let scale = s.amax().max(f64::MIN_POSITIVE);
        (&s - s.transpose()).amax() / scale
    }

    /// Adds Gaussian noise of relative Frobenius size `rel`, keeping `WΛ`
    /// symmetric with constants in its kernel.
    pub fn with_noise(&self, rel: f64, seed: u64) -> Self {
        let n = self.len();
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut e = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        symmetrize(&mut e);
        let p = DMatrix::<f64>::identity(n, n) - DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
        let e = &p * e * &p;
        let scale = rel * self.energy().norm() / e.norm();
        let s = self.energy() + e * scale;
        Self::from_energy(self.bd.clone(), &s)
    }

    pub fn check_convention(&self, other: &DtnMatrix) -> Result<()> {
        if self.convention != other.convention {
            return Err(Error::ConventionMismatch(self.convention.clone(), other.convention.clone()));
        }
        if self.len() != other.len() {
            return Err(Error::Validation("DtN matrices live on different boundaries".into()));
        }
        Ok(())
    }
}

fn fem_for(bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<Fem> {
    Ok(Fem::new(RingMesh::build(bd, opts)?))
}

/// Assembles `Λσ` on the boundary `bd`.
pub fn dtn_assemble(sigma: &dyn TensorField, bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<DtnMatrix> {
    let fem = fem_for(bd, opts)?;
    let a = fem.assemble(&fem.sample(sigma));
    let h = fem.harmonic(&a)?;
    Ok(DtnMatrix::from_energy(bd.clone(), &h.schur))
}

/// `Λ₀`, the σ = 1 operator.
pub fn dtn_laplace(bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<DtnMatrix> {
    dtn_assemble(&|_z: Complex64| [1.0, 0.0, 1.0], bd, opts)
}

/// `Λσ − Λ₀` without cancellation.
///
/// With `U₀`, `Uσ` the discrete harmonic extensions and `δA = Aσ − A₀`,
/// `W(Λσ − Λ₀) = U₀ᵀ δA Uσ`, which only involves triangles where σ differs from
/// the identity. Subtracting two assembled operators instead loses the
/// exponentially small high-mode content that the boundary integral needs.
pub fn dtn_perturbation(sigma: &dyn TensorField, bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<DMatrix<f64>> {
    let fem = fem_for(bd, opts)?;
    let s = fem.sample(sigma);
    let id = vec![[1.0, 0.0, 1.0]; fem.n_tris()];
    let mut trip = Vec::new();
    for (t, tri) in fem.mesh.tris.iter().enumerate() {
        let d = [s[t][0] - 1.0, s[t][1], s[t][2] - 1.0];
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        let k = fem.element(t, d);
        for a in 0..3 {
            for b in 0..3 {
                trip.push((tri[a], tri[b], k[a][b]));
            }
        }
    }
    let nb = bd.len();
    if trip.is_empty() {
        return Ok(DMatrix::zeros(nb, nb));
    }
    let da = Csr::from_triplets(fem.n_nodes(), trip);
    let u0 = fem.harmonic(&fem.assemble(&id))?.ext;
    let us = fem.harmonic(&fem.assemble(&s))?.ext;
    let support: Vec<usize> = (0..fem.n_nodes()).filter(|&i| da.indptr[i + 1] > da.indptr[i]).collect();
    // T = δA Uσ restricted to the support rows, then U₀ᵀ T
    let mut t = DMatrix::<f64>::zeros(support.len(), nb);
    let mut u0s = DMatrix::<f64>::zeros(support.len(), nb);
    for (r, &i) in support.iter().enumerate() {
        for (c, v) in da.row(i) {
            for j in 0..nb {
                t[(r, j)] += v * us[(c, j)];
            }
        }
        u0s.set_row(r, &u0.row(i));
    }
    let mut e = u0s.transpose() * t;
    symmetrize(&mut e);
    for (i, mut row) in e.row_iter_mut().enumerate() {
        row /= bd.weights[i];
    }
    Ok(e)
}

/// Transports `Λ` along the boundary bijection `z_k ↦ image[k]`.
///
/// Densities rescale by the ratio of arclength weights, so `W'Λ' = WΛ`.
pub fn dtn_transport(lam: &DtnMatrix, image: &[Complex64]) -> Result<DtnMatrix> {
    let n = lam.len();
    if image.len() != n {
        return Err(Error::Validation("boundary map has the wrong number of nodes".into()));
    }
    let c = super::boundary::star_center(image);
    let mut total = 0.0;
    for k in 0..n {
        let a = image[k] - c;
        let b = image[(k + 1) % n] - c;
        let step = (b / a).arg();
        if !(step > 0.0) {
            return Err(Error::NonMonotone { node: k });
        }
        total += step;
    }
    if (total - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
        return Err(Error::NonMonotone { node: 0 });
    }
    let bd = BoundaryDiscretization::smooth(image.to_vec())?;
    let mut data = lam.data.clone();
    for (i, mut row) in data.row_iter_mut().enumerate() {
        row *= lam.bd.weights[i] / bd.weights[i];
    }
    Ok(DtnMatrix { bd, data, convention: lam.convention.clone() })
}

/// Block operators of the annulus between the interface `∂X₁` and the outer boundary `∂X₂`.
pub struct GlueBlocks {
    pub interface: BoundaryDiscretization,
    pub l11: DMatrix<f64>,
    pub l12: DMatrix<f64>,
    pub l21: DMatrix<f64>,
    pub l22: DMatrix<f64>,
}

/// Assembles the annulus blocks with the interface at half radius.
///
/// `Λ¹¹ f₁` is the flux on `∂X₁` (annulus normal, pointing inward) of the solution with
/// `u|∂X₁ = f₁, u|∂X₂ = 0`; `Λ¹²`, `Λ²¹`, `Λ²²` follow the same pattern.
pub fn annulus_blocks(sigma: &dyn TensorField, bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<GlueBlocks> {
    if opts.rings % 2 != 0 || opts.rings < 4 {
        return Err(Error::Validation("gluing needs an even ring count of at least 4".into()));
    }
    let mesh = RingMesh::build(bd, opts)?;
    let half = opts.rings / 2;
    let iface: Vec<usize> = mesh.rings[half].clone();
    let interface = BoundaryDiscretization::smooth(iface.iter().map(|&k| mesh.points[k]).collect())?;
    let fem = Fem::new(mesh);
    let inner: usize = fem.mesh.rings[..half].iter().map(|r| r.len()).sum();
    let s = fem.sample(sigma);
    // keep only annulus triangles (all vertices at ring index >= half)
    let mut trip = Vec::new();
    for (t, tri) in fem.mesh.tris.iter().enumerate() {
        if tri.iter().any(|&v| v < inner) {
            continue;
        }
        let k = fem.element(t, s[t]);
        for a in 0..3 {
            for b in 0..3 {
                trip.push((tri[a], tri[b], k[a][b]));
            }
        }
    }
    let a = Csr::from_triplets(fem.n_nodes(), trip);
    let mid: Vec<usize> = fem.mesh.rings[half + 1..opts.rings].iter().flatten().copied().collect();
    let outer = fem.boundary().to_vec();
    let ends: Vec<usize> = iface.iter().chain(outer.iter()).copied().collect();
    let schur = two_sided_schur(&a, &mid, &ends)?;
    let (ni, nb) = (iface.len(), outer.len());
    let blk = |r0: usize, c0: usize, nr: usize, nc: usize| schur.view((r0, c0), (nr, nc)).into_owned();
    let mut l11 = -blk(0, 0, ni, ni);
    let mut l12 = -blk(0, ni, ni, nb);
    let mut l21 = blk(ni, 0, nb, ni);
    let mut l22 = blk(ni, ni, nb, nb);
    for i in 0..ni {
        let w = interface.weights[i];
        l11.row_mut(i).scale_mut(1.0 / w);
        l12.row_mut(i).scale_mut(1.0 / w);
    }
    for i in 0..nb {
        let w = bd.weights[i];
        l21.row_mut(i).scale_mut(1.0 / w);
        l22.row_mut(i).scale_mut(1.0 / w);
    }
    Ok(GlueBlocks { interface, l11, l12, l21, l22 })
}

/// Schur complement of `a` onto `ends`, eliminating `mid`.
fn two_sided_schur(a: &Csr, mid: &[usize], ends: &[usize]) -> Result<DMatrix<f64>> {
    use crate::linalg::Envelope;
    let chol = Envelope::factor(a, mid)?;
    let mut pos = vec![usize::MAX; a.n];
    for (p, &g) in mid.iter().enumerate() {
        pos[g] = p;
    }
    let ne = ends.len();
    let mut ext = DMatrix::<f64>::zeros(a.n, ne);
    for (j, &e) in ends.iter().enumerate() {
        let mut rhs = vec![0.0; mid.len()];
        for (c, v) in a.row(e) {
            if pos[c] != usize::MAX {
                rhs[pos[c]] = -v;
            }
        }
        chol.solve_in_place(&mut rhs);
        for (p, &g) in mid.iter().enumerate() {
            ext[(g, j)] = rhs[p];
        }
        ext[(e, j)] = 1.0;
    }
    let mut s = DMatrix::<f64>::zeros(ne, ne);
    for (k, &e) in ends.iter().enumerate() {
        for (c, v) in a.row(e) {
            for j in 0..ne {
                s[(k, j)] += v * ext[(c, j)];
            }
        }
    }
    symmetrize(&mut s);
    Ok(s)
}

/// Inner operator `Λσ̂` on the interface, on the same nodes the annulus uses.
pub fn interface_dtn(sigma: &dyn TensorField, blocks: &GlueBlocks, opts: MeshOptions) -> Result<DtnMatrix> {
    let inner = MeshOptions { rings: opts.rings / 2, ..opts };
    dtn_assemble(sigma, &blocks.interface, inner)
}

/// `Λ̂ = Λ²² + Λ²¹ (Λσ̂ − Λ¹¹)⁻¹ Λ¹²`.
pub fn dtn_glue(
    l11: &DMatrix<f64>,
    l12: &DMatrix<f64>,
    l21: &DMatrix<f64>,
    l22: &DMatrix<f64>,
    lsig: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if l11.nrows() == 0 || l22.nrows() == 0 || lsig.nrows() != l11.nrows() {
        return Err(Error::Validation("gluing blocks have inconsistent shapes".into()));
    }
    let m = lsig - l11;
    let sv = m.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= 1e12) {
        return Err(Error::SingularGlue { cond });
    }
    let x = m.lu().solve(l12).ok_or(Error::SingularGlue { cond: f64::INFINITY })?;
    Ok(l22 + l21 * x)
}

/// Boundary values and interior nodal solution of a Dirichlet problem.
pub struct DirichletSolution {
    pub fem: Fem,
    pub u: Vec<f64>,
}

/// Solves `div(σ∇u) = 0`, `u = f` on the boundary nodes.
pub fn solve_dirichlet(
    sigma: &dyn TensorField,
    bd: &BoundaryDiscretization,
    f: &[f64],
    opts: MeshOptions,
) -> Result<DirichletSolution> {
    if f.len() != bd.len() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("Dirichlet data must be finite, one value per node".into()));
    }
    let fem = fem_for(bd, opts)?;
    let a = fem.assemble(&fem.sample(sigma));
    let u = fem.solve_dirichlet(&a, f)?;
    Ok(DirichletSolution { fem, u })
}

impl DirichletSolution {
    /// Max interior residual of the assembled equations relative to the matrix scale.
    pub fn residual(&self, sigma: &dyn TensorField) -> f64 {
        let a = self.fem.assemble(&self.fem.sample(sigma));
        let r = a.mul_vec(&self.u);
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let umax = self.u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        self.fem.interior().iter().map(|&i| r[i].abs()).fold(0.0, f64::max) / (scale * umax)
    }
}
