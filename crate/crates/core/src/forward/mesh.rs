use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::BoundaryDiscretization;
use crate::{Error, Result};

/// Boundary-fitted triangulation of a star-shaped region by scaled copies of the boundary.
///
/// Ring `k` of `K` sits at radius fraction `k/K`. Its node count is the boundary count
/// halved as often as the local resolution allows, so consecutive rings nest and the
/// mesh on a disk is invariant under rotation by the innermost ring spacing.
#[derive(Clone, Debug)]
pub struct RingMesh {
    pub points: Vec<Complex64>,
    pub tris: Vec<[usize; 3]>,
    /// Node indices of each ring; `rings[0]` is the centre.
    pub rings: Vec<Vec<usize>>,
}

/// Resolution of the ring mesh.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshOptions {
    pub rings: usize,
    pub min_ring: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { rings: 64, min_ring: 64 }
    }
}

impl MeshOptions {
    /// Ring count matching a grid spacing `h` on a boundary of outer radius `radius`.
    pub fn for_spacing(radius: f64, h: f64) -> Self {
        let k = (radius / h).ceil() as usize;
        MeshOptions { rings: (k + k % 2).max(4), min_ring: 64 }
    }
}

impl RingMesh {
    pub fn build(bd: &BoundaryDiscretization, opts: MeshOptions) -> Result<Self> {
        let kk = opts.rings;
        if kk < 2 {
            return Err(Error::Validation("ring mesh needs at least two rings".into()));
        }
        let nb = bd.len();
        let c = bd.center;
        let mut points = vec![c];
        let mut rings = vec![vec![0]];
        for k in 1..=kk {
            let s = k as f64 / kk as f64;
            let m = if k == kk { nb } else { ring_count(nb, (2.0 * PI * k as f64).ceil() as usize, opts.min_ring) };
            let stride = nb / m;
            let base = points.len();
            for j in 0..m {
                points.push(if k == kk { bd.nodes[j] } else { c + (bd.nodes[j * stride] - c) * s });
            }
            rings.push((base..base + m).collect());
        }
        let mut tris = Vec::new();
        let r1 = &rings[1];
        for j in 0..r1.len() {
            tris.push([0, r1[j], r1[(j + 1) % r1.len()]]);
        }
        for k in 1..kk {
            let (a, b) = (&rings[k], &rings[k + 1]);
            let (ma, mb) = (a.len(), b.len());
            let r = mb / ma;
            for i in 0..ma {
                for q in 0..r {
                    tris.push([a[i], b[(i * r + q + 1) % mb], b[i * r + q]]);
                }
                tris.push([a[i], a[(i + 1) % ma], b[((i + 1) * r) % mb]]);
            }
        }
        for t in tris.iter_mut() {
            if signed_area(&points, t) < 0.0 {
                t.swap(1, 2);
            }
            if !(signed_area(&points, t) > 0.0) {
                return Err(Error::Validation("degenerate triangle: boundary is not star-shaped about its centroid".into()));
            }
        }
        Ok(RingMesh { points, tris, rings })
    }

    pub fn boundary(&self) -> &[usize] {
        self.rings.last().unwrap()
    }

    /// All non-boundary nodes, centre first.
    pub fn interior(&self) -> Vec<usize> {
        self.rings[..self.rings.len() - 1].iter().flatten().copied().collect()
    }

    pub fn centroid(&self, t: usize) -> Complex64 {
        let [a, b, c] = self.tris[t];
        (self.points[a] + self.points[b] + self.points[c]) / 3.0
    }
}

fn ring_count(nb: usize, target: usize, min_ring: usize) -> usize {
    let mut m = nb;
    while m % 2 == 0 && m / 2 >= target.max(min_ring) {
        m /= 2;
    }
    m
}

pub(crate) fn signed_area(p: &[Complex64], t: &[usize; 3]) -> f64 {
    let u = p[t[1]] - p[t[0]];
    let v = p[t[2]] - p[t[0]];
    0.5 * (u.re * v.im - u.im * v.re)
}
