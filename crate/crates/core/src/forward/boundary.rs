use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counterclockwise boundary nodes with arclength weights and unit frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryDiscretization {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub normals: Vec<Complex64>,
    pub tangents: Vec<Complex64>,
    /// Point about which the boundary is star-shaped.
    pub center: Complex64,
}

impl BoundaryDiscretization {
    /// Nodes sampled uniformly in a smooth periodic parameter; spectral weights.
    pub fn smooth(nodes: Vec<Complex64>) -> Result<Self> {
        check_nodes(&nodes)?;
        let n = nodes.len();
        let d = spectral_derivative(&nodes);
        let h = 2.0 * PI / n as f64;
        let weights = d.iter().map(|v| v.norm() * h).collect();
        let tangents: Vec<Complex64> = d.iter().map(|v| v / v.norm()).collect();
        let normals = tangents.iter().map(|t| t * Complex64::new(0.0, -1.0)).collect();
        let center = star_center(&nodes);
        Ok(BoundaryDiscretization { nodes, weights, normals, tangents, center })
    }

    /// Polygonal boundary: chord-averaged weights and central-difference frame.
    pub fn polygonal(nodes: Vec<Complex64>) -> Result<Self> {
        check_nodes(&nodes)?;
        let n = nodes.len();
        let mut weights = Vec::with_capacity(n);
        let mut tangents = Vec::with_capacity(n);
        for k in 0..n {
            let prev = nodes[(k + n - 1) % n];
            let next = nodes[(k + 1) % n];
            let a = nodes[k] - prev;
            let b = next - nodes[k];
            weights.push(0.5 * (a.norm() + b.norm()));
            let t = a / a.norm() + b / b.norm();
            tangents.push(t / t.norm());
        }
        let normals = tangents.iter().map(|t| t * Complex64::new(0.0, -1.0)).collect();
        let center = star_center(&nodes);
        Ok(BoundaryDiscretization { nodes, weights, normals, tangents, center })
    }

    pub fn circle(center: Complex64, radius: f64, n: usize) -> Self {
        let nodes = (0..n).map(|k| center + Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64)).collect();
        Self::smooth(nodes).expect("circle nodes are valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `|z'(t)|` for the uniform parameter `t_k = 2πk/n`.
    pub fn speed(&self) -> Vec<f64> {
        let h = 2.0 * PI / self.len() as f64;
        self.weights.iter().map(|w| w / h).collect()
    }
}

fn check_nodes(nodes: &[Complex64]) -> Result<()> {
    if nodes.len() < 8 {
        return Err(Error::Validation(format!("need at least 8 boundary nodes, got {}", nodes.len())));
    }
    let n = nodes.len();
    let area: f64 = (0..n).map(|k| (nodes[k].conj() * nodes[(k + 1) % n]).im).sum::<f64>() * 0.5;
    if !(area > 0.0) {
        return Err(Error::Validation("boundary nodes must be counterclockwise".into()));
    }
    Ok(())
}

/// Area centroid of the polygon through the nodes.
pub fn star_center(nodes: &[Complex64]) -> Complex64 {
    let n = nodes.len();
    let mut a = 0.0;
    let mut c = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let p = nodes[k];
        let q = nodes[(k + 1) % n];
        let cr = p.re * q.im - q.re * p.im;
        a += cr;
        c += (p + q) * cr;
    }
    c / (3.0 * a)
}

/// `dz/dt` of a periodic sample by FFT, Nyquist mode dropped.
pub fn spectral_derivative(z: &[Complex64]) -> Vec<Complex64> {
    let n = z.len();
    let mut planner = FftPlanner::new();
    let mut buf = z.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let m = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
        *v *= if n % 2 == 0 && k == n / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, m as f64) };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|v| v / n as f64).collect()
}
