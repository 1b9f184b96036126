use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Region `X` inside the computational rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Disk { center: [f64; 2], radius: f64 },
    /// Counterclockwise vertices of a polygon that is star-shaped about its vertex mean.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Domain {
    pub fn unit_disk() -> Self {
        Domain::Disk { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn disk(center: Complex64, radius: f64) -> Self {
        Domain::Disk { center: [center.re, center.im], radius }
    }

    pub fn polygon(vertices: &[Complex64]) -> Self {
        Domain::Polygon { vertices: vertices.iter().map(|z| [z.re, z.im]).collect() }
    }

    pub fn center(&self) -> Complex64 {
        match self {
            Domain::Disk { center, .. } => Complex64::new(center[0], center[1]),
            Domain::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let (sx, sy) = vertices.iter().fold((0.0, 0.0), |a, v| (a.0 + v[0], a.1 + v[1]));
                Complex64::new(sx / n, sy / n)
            }
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            Domain::Disk { center, radius } => {
                (z - Complex64::new(center[0], center[1])).norm() < *radius
            }
            Domain::Polygon { vertices } => {
                // even-odd ray casting
                let mut inside = false;
                let n = vertices.len();
                for a in 0..n {
                    let p = vertices[a];
                    let q = vertices[(a + 1) % n];
                    if (p[1] > z.im) != (q[1] > z.im) {
                        let x = p[0] + (z.im - p[1]) / (q[1] - p[1]) * (q[0] - p[0]);
                        if z.re < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// `n` counterclockwise boundary nodes. Polygons are resampled uniformly in arclength.
    pub fn boundary_nodes(&self, n: usize) -> Vec<Complex64> {
        match self {
            Domain::Disk { center, radius } => {
                let c = Complex64::new(center[0], center[1]);
                (0..n)
                    .map(|k| {
                        let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        c + Complex64::from_polar(*radius, t)
                    })
                    .collect()
            }
            Domain::Polygon { vertices } => {
                let v: Vec<Complex64> =
                    vertices.iter().map(|p| Complex64::new(p[0], p[1])).collect();
                if v.len() == n {
                    return v;
                }
                resample_closed(&v, n)
            }
        }
    }
}

/// Uniform arclength resampling of a closed polyline.
pub fn resample_closed(v: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = v.len();
    let mut cum = vec![0.0; m + 1];
    for k in 0..m {
        cum[k + 1] = cum[k] + (v[(k + 1) % m] - v[k]).norm();
    }
    let total = cum[m];
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] <= s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(v[seg] + (v[(seg + 1) % m] - v[seg]) * t);
    }
    out
}

/// Uniform cell-centred grid with a domain mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridSpec", try_from = "GridSpec")]
pub struct Grid2D {
    pub origin: Complex64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    mask: Vec<bool>,
}

/// Serialized form of a grid; the mask is recomputed from the domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_re: f64,
    pub origin_im: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
}

impl From<Grid2D> for GridSpec {
    fn from(g: Grid2D) -> Self {
        GridSpec { origin_re: g.origin.re, origin_im: g.origin.im, h: g.h, nx: g.nx, ny: g.ny, domain: g.domain }
    }
}

impl TryFrom<GridSpec> for Grid2D {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        Grid2D::new(Complex64::new(s.origin_re, s.origin_im), s.h, s.nx, s.ny, s.domain)
    }
}

impl Grid2D {
    pub fn new(origin: Complex64, h: f64, nx: usize, ny: usize, domain: Domain) -> Result<Self> {
        if !(h > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::Validation(format!("bad grid: h={h}, nx={nx}, ny={ny}")));
        }
        let mut g = Grid2D { origin, h, nx, ny, domain, mask: Vec::new() };
        g.mask = (0..nx * ny).map(|k| g.domain.contains(g.center_of(k))).collect();
        Ok(g)
    }

    /// Square grid of `n×n` cells on `center ± half_width`.
    pub fn square(center: Complex64, half_width: f64, n: usize, domain: Domain) -> Result<Self> {
        let h = 2.0 * half_width / n as f64;
        Grid2D::new(center - Complex64::new(half_width, half_width), h, n, n, domain)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> Complex64 {
        self.origin + Complex64::new((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn center_of(&self, k: usize) -> Complex64 {
        self.center(k % self.nx, k / self.nx)
    }

    pub fn centers(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.center_of(k)).collect()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_mask(&self, k: usize) -> bool {
        self.mask[k]
    }

    /// Upper-right corner of the rectangle.
    pub fn extent(&self) -> (Complex64, Complex64) {
        (
            self.origin,
            self.origin + Complex64::new(self.nx as f64 * self.h, self.ny as f64 * self.h),
        )
    }

    /// Bilinear weights over cell centres; `None` outside the grid rectangle.
    pub fn interp_weights(&self, z: Complex64) -> Option<[(usize, f64); 4]> {
        let fx = (z.re - self.origin.re) / self.h - 0.5;
        let fy = (z.im - self.origin.im) / self.h - 0.5;
        if !(fx >= -0.5 && fy >= -0.5 && fx <= self.nx as f64 - 0.5 && fy <= self.ny as f64 - 0.5)
        {
            return None;
        }
        let fx = fx.clamp(0.0, (self.nx - 1) as f64);
        let fy = fy.clamp(0.0, (self.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j0 = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        Some([
            (self.index(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (self.index(i1, j0), tx * (1.0 - ty)),
            (self.index(i0, j1), (1.0 - tx) * ty),
            (self.index(i1, j1), tx * ty),
        ])
    }

    /// Checks spacing, mask connectivity and the identity band around the mask.
    pub fn validate(&self) -> Result<()> {
        const BAND: usize = 4;
        let mut count = 0;
        let mut start = None;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                if !self.mask[k] {
                    continue;
                }
                count += 1;
                start.get_or_insert(k);
                if i < BAND || j < BAND || i + BAND >= self.nx || j + BAND >= self.ny {
                    return Err(Error::Validation(format!(
                        "mask cell ({i},{j}) is within {BAND} cells of the grid edge"
                    )));
                }
            }
        }
        let Some(start) = start else {
            return Err(Error::Validation("empty domain mask".into()));
        };
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(k) = stack.pop() {
            reached += 1;
            let (i, j) = (k % self.nx, k / self.nx);
            let nbrs = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (a, b) in nbrs {
                if a < self.nx && b < self.ny {
                    let q = self.index(a, b);
                    if self.mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if reached != count {
            return Err(Error::Validation("domain mask is not connected".into()));
        }
        Ok(())
    }
}
