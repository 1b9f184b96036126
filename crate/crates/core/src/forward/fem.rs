use nalgebra::DMatrix;

use super::RingMesh;
use crate::fields::TensorField;
use crate::linalg::{pcg, Csr, Envelope};
use crate::Result;

/// P1 finite elements on a ring mesh.
#[derive(Clone, Debug)]
pub struct Fem {
    pub mesh: RingMesh,
    pub area: Vec<f64>,
    /// Gradients of the three barycentric basis functions per triangle.
    pub grads: Vec<[[f64; 2]; 3]>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

/// Discrete harmonic extension of the boundary nodal basis and its Schur complement.
pub struct Harmonic {
    /// `nb×nb` energy matrix `A_BB − A_BI A_II⁻¹ A_IB`.
    pub schur: DMatrix<f64>,
    /// `n×nb` nodal values of the extension of each boundary basis vector.
    pub ext: DMatrix<f64>,
}

impl Fem {
    pub fn new(mesh: RingMesh) -> Self {
        let mut area = Vec::with_capacity(mesh.tris.len());
        let mut grads = Vec::with_capacity(mesh.tris.len());
        for t in &mesh.tris {
            let p = t.map(|k| mesh.points[k]);
            let (x1, y1) = (p[1].re - p[0].re, p[1].im - p[0].im);
            let (x2, y2) = (p[2].re - p[0].re, p[2].im - p[0].im);
            let det = x1 * y2 - x2 * y1;
            // inverse transpose of [[x1, x2], [y1, y2]] applied to reference gradients
            let g1 = [y2 / det, -x2 / det];
            let g2 = [-y1 / det, x1 / det];
            let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
            area.push(0.5 * det);
            grads.push([g0, g1, g2]);
        }
        let interior = mesh.interior();
        let boundary = mesh.boundary().to_vec();
        Fem { mesh, area, grads, interior, boundary }
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.points.len()
    }

    pub fn n_tris(&self) -> usize {
        self.mesh.tris.len()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Element matrix `area · Gᵀ σ G`.
    pub fn element(&self, t: usize, s: [f64; 3]) -> [[f64; 3]; 3] {
        let g = &self.grads[t];
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            let sg = [s[0] * g[a][0] + s[1] * g[a][1], s[1] * g[a][0] + s[2] * g[a][1]];
            for b in 0..3 {
                k[a][b] = self.area[t] * (sg[0] * g[b][0] + sg[1] * g[b][1]);
            }
        }
        k
    }

    /// Stiffness matrix for per-triangle tensors.
    pub fn assemble(&self, s: &[[f64; 3]]) -> Csr {
        let mut trip = Vec::with_capacity(9 * self.n_tris());
        for (t, tri) in self.mesh.tris.iter().enumerate() {
            let k = self.element(t, s[t]);
            for a in 0..3 {
                for b in 0..3 {
                    trip.push((tri[a], tri[b], k[a][b]));
                }
            }
        }
        Csr::from_triplets(self.n_nodes(), trip)
    }

    /// Conductivity sampled at triangle centroids.
    pub fn sample(&self, sigma: &dyn TensorField) -> Vec<[f64; 3]> {
        (0..self.n_tris()).map(|t| sigma.tensor(self.mesh.centroid(t))).collect()
    }

    /// Dirichlet solve: returns all nodal values given boundary values `f`.
    pub fn solve_dirichlet(&self, a: &Csr, f: &[f64]) -> Result<Vec<f64>> {
        let (chol, pos) = self.factor(a)?;
        let mut u = vec![0.0; self.n_nodes()];
        for (k, &b) in self.boundary.iter().enumerate() {
            u[b] = f[k];
        }
        let mut rhs = vec![0.0; self.interior.len()];
        for (k, &b) in self.boundary.iter().enumerate() {
            if f[k] != 0.0 {
                for (j, v) in a.row(b) {
                    if pos[j] != usize::MAX {
                        rhs[pos[j]] -= v * f[k];
                    }
                }
            }
        }
        let x = self.solve_with(a, chol.as_ref(), rhs)?;
        for (p, &g) in self.interior.iter().enumerate() {
            u[g] = x[p];
        }
        Ok(u)
    }

    fn factor(&self, a: &Csr) -> Result<(Option<Envelope>, Vec<usize>)> {
        let mut pos = vec![usize::MAX; self.n_nodes()];
        for (p, &g) in self.interior.iter().enumerate() {
            pos[g] = p;
        }
        // fall back to conjugate gradients if the factorization breaks down
        Ok((Envelope::factor(a, &self.interior).ok(), pos))
    }

    fn solve_with(&self, a: &Csr, chol: Option<&Envelope>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
        match chol {
            Some(c) => {
                c.solve_in_place(&mut rhs);
                Ok(rhs)
            }
            None => pcg(a, &self.interior, &rhs, 1e-10, 20 * self.interior.len().max(100)),
        }
    }

    /// Harmonic extensions of all boundary basis vectors and the Schur complement.
    pub fn harmonic(&self, a: &Csr) -> Result<Harmonic> {
        let (chol, pos) = self.factor(a)?;
        let (n, nb, ni) = (self.n_nodes(), self.boundary.len(), self.interior.len());
        let mut ext = DMatrix::<f64>::zeros(n, nb);
        for (j, &b) in self.boundary.iter().enumerate() {
            let mut rhs = vec![0.0; ni];
            for (c, v) in a.row(b) {
                if pos[c] != usize::MAX {
                    rhs[pos[c]] = -v;
                }
            }
            let x = self.solve_with(a, chol.as_ref(), rhs)?;
            let mut col = ext.column_mut(j);
            for (p, &g) in self.interior.iter().enumerate() {
                col[g] = x[p];
            }
            col[b] = 1.0;
        }
        let mut schur = DMatrix::<f64>::zeros(nb, nb);
        for (k, &b) in self.boundary.iter().enumerate() {
            for (c, v) in a.row(b) {
                for j in 0..nb {
                    schur[(k, j)] += v * ext[(c, j)];
                }
            }
        }
        symmetrize(&mut schur);
        Ok(Harmonic { schur, ext })
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
