//! File formats for stage artifacts.
//!
//! Tables are CSV with a header row; floats are written in shortest
//! round-trip form so a write/read cycle is lossless. Metadata that does not
//! fit a table (grids, boundary discretizations, spectral parameters) goes to
//! a JSON sidecar next to the CSV, with the same stem and a `.json` extension.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cgo::{BoundaryMap, CgoTrace, SpectralParameterSet, TraceEntry};
use crate::curve::{CurveBoundarySample, SurfaceCloud};
use crate::fields::{ConductivityField, Grid2D};
use crate::forward::{BoundaryDiscretization, DtnMatrix};
use crate::{Error, Result};

/// Path of the JSON sidecar of a CSV artifact.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::Reader::from_path(path)?)
}

fn expect_header(r: &mut csv::Reader<File>, want: &[&str], path: &Path) -> Result<()> {
    let got = r.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Validation(format!("{}: expected columns {}", path.display(), want.join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, path: &Path) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Validation(format!("{}: bad value in column {k} of row {:?}", path.display(), rec.position().map(|p| p.line()))))
}

pub fn write_grid(path: &Path, grid: &Grid2D) -> Result<()> {
    write_json(path, grid)
}

pub fn read_grid(path: &Path) -> Result<Grid2D> {
    read_json(path)
}

const CONDUCTIVITY_COLS: [&str; 5] = ["i", "j", "s11", "s12", "s22"];

/// Writes `i,j,s11,s12,s22` for every cell and the grid to the sidecar.
pub fn write_conductivity(path: &Path, sigma: &ConductivityField) -> Result<()> {
    let g = &sigma.grid;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONDUCTIVITY_COLS)?;
    for k in 0..g.len() {
        let (i, j) = (k % g.nx, k / g.nx);
        w.serialize((i, j, sigma.s11[k], sigma.s12[k], sigma.s22[k]))?;
    }
    w.flush()?;
    write_grid(&sidecar(path), g)
}

/// Reads a conductivity on `grid`; cells absent from the file are the identity.
pub fn read_conductivity(path: &Path, grid: &Grid2D) -> Result<ConductivityField> {
    let mut r = reader(path)?;
    expect_header(&mut r, &CONDUCTIVITY_COLS, path)?;
    let mut out = ConductivityField::identity(grid);
    for rec in r.records() {
        let rec = rec?;
        let (i, j): (usize, usize) = (field(&rec, 0, path)?, field(&rec, 1, path)?);
        if i >= grid.nx || j >= grid.ny {
            return Err(Error::Validation(format!("{}: cell ({i},{j}) outside the grid", path.display())));
        }
        out.set(grid.index(i, j), [field(&rec, 2, path)?, field(&rec, 3, path)?, field(&rec, 4, path)?]);
    }
    out.validate()?;
    Ok(out)
}

const COMPLEX_COLS: [&str; 4] = ["i", "j", "re", "im"];

/// Writes `i,j,re,im` for a per-cell complex field and the grid to the sidecar.
pub fn write_complex_field(path: &Path, grid: &Grid2D, values: &[Complex64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Validation("field size does not match the grid".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COMPLEX_COLS)?;
    for (k, v) in values.iter().enumerate() {
        w.serialize((k % grid.nx, k / grid.nx, v.re, v.im))?;
    }
    w.flush()?;
    write_grid(&sidecar(path), grid)
}

/// Reads a per-cell complex field; missing cells are zero.
pub fn read_complex_field(path: &Path, grid: &Grid2D) -> Result<Vec<Complex64>> {
    let mut r = reader(path)?;
    expect_header(&mut r, &COMPLEX_COLS, path)?;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for rec in r.records() {
        let rec = rec?;
        let (i, j): (usize, usize) = (field(&rec, 0, path)?, field(&rec, 1, path)?);
        if i >= grid.nx || j >= grid.ny {
            return Err(Error::Validation(format!("{}: cell ({i},{j}) outside the grid", path.display())));
        }
        out[grid.index(i, j)] = Complex64::new(field(&rec, 2, path)?, field(&rec, 3, path)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DtnHeader {
    convention: String,
    boundary: BoundaryDiscretization,
}

/// Writes the matrix row-major without a header row; the boundary and the
/// flux convention go to the sidecar.
pub fn write_dtn(path: &Path, lam: &DtnMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..lam.len() {
        w.write_record(lam.data.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    write_json(&sidecar(path), &DtnHeader { convention: lam.convention.clone(), boundary: lam.bd.clone() })
}

pub fn read_dtn(path: &Path) -> Result<DtnMatrix> {
    let header: DtnHeader = read_json(&sidecar(path))?;
    let n = header.boundary.len();
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut vals = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::Validation(format!("{}: row {rows} has {} entries, expected {n}", path.display(), rec.len())));
        }
        for k in 0..n {
            vals.push(field::<f64>(&rec, k, path)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Validation(format!("{}: {rows} rows, expected {n}", path.display())));
    }
    let mut lam = DtnMatrix::new(header.boundary, DMatrix::from_row_slice(n, n, &vals));
    lam.convention = header.convention;
    Ok(lam)
}

const TRACE_COLS: [&str; 7] = ["lambda_re", "lambda_im", "param", "node", "psi_re", "psi_im", "cond"];

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    nodes: Vec<Complex64>,
    params: SpectralParameterSet,
    skipped: Vec<(Complex64, f64)>,
}

/// Writes one row per `(λ, node)`; nodes, parameters and skipped samples go to the sidecar.
pub fn write_trace(path: &Path, trace: &CgoTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_COLS)?;
    for e in &trace.entries {
        for (k, p) in e.psi.iter().enumerate() {
            w.serialize((e.lambda.re, e.lambda.im, e.param, k, p.re, p.im, e.cond))?;
        }
    }
    w.flush()?;
    let header = TraceHeader { nodes: trace.nodes.clone(), params: trace.params.clone(), skipped: trace.skipped.clone() };
    write_json(&sidecar(path), &header)
}

pub fn read_trace(path: &Path) -> Result<CgoTrace> {
    let header: TraceHeader = read_json(&sidecar(path))?;
    let n = header.nodes.len();
    let mut r = reader(path)?;
    expect_header(&mut r, &TRACE_COLS, path)?;
    let mut entries: Vec<TraceEntry> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let lambda = Complex64::new(field(&rec, 0, path)?, field(&rec, 1, path)?);
        let param: usize = field(&rec, 2, path)?;
        let node: usize = field(&rec, 3, path)?;
        let psi = Complex64::new(field(&rec, 4, path)?, field(&rec, 5, path)?);
        let cond: f64 = field(&rec, 6, path)?;
        if node == 0 {
            entries.push(TraceEntry { lambda, param, psi: Vec::with_capacity(n), cond });
        }
        let e = entries
            .last_mut()
            .filter(|e| e.lambda == lambda && e.psi.len() == node)
            .ok_or_else(|| Error::Validation(format!("{}: trace rows out of order", path.display())))?;
        e.psi.push(psi);
    }
    if entries.iter().any(|e| e.psi.len() != n || e.param >= header.params.params.len()) {
        return Err(Error::Validation(format!("{}: incomplete trace", path.display())));
    }
    Ok(CgoTrace { nodes: header.nodes, params: header.params, entries, skipped: header.skipped })
}

const BOUNDARY_MAP_COLS: [&str; 5] = ["node", "z_re", "z_im", "f_re", "f_im"];

/// Writes the final estimate of `F|∂X`; the per-modulus estimates go to the sidecar.
pub fn write_boundary_map(path: &Path, map: &BoundaryMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BOUNDARY_MAP_COLS)?;
    for (k, (z, f)) in map.nodes.iter().zip(&map.values).enumerate() {
        w.serialize((k, z.re, z.im, f.re, f.im))?;
    }
    w.flush()?;
    write_json(&sidecar(path), &map.ladder)
}

pub fn read_boundary_map(path: &Path) -> Result<BoundaryMap> {
    let mut r = reader(path)?;
    expect_header(&mut r, &BOUNDARY_MAP_COLS, path)?;
    let (mut nodes, mut values) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        nodes.push(Complex64::new(field(&rec, 1, path)?, field(&rec, 2, path)?));
        values.push(Complex64::new(field(&rec, 3, path)?, field(&rec, 4, path)?));
    }
    let side = sidecar(path);
    let ladder = if side.exists() { read_json(&side)? } else { Vec::new() };
    Ok(BoundaryMap { nodes, values, ladder })
}

const GAMMA_COLS: [&str; 5] = ["t", "z1_re", "z1_im", "z2_re", "z2_im"];

/// Writes the sampled curve, including the closing sample.
pub fn write_gamma(path: &Path, g: &CurveBoundarySample) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GAMMA_COLS)?;
    for k in 0..g.t.len() {
        w.serialize((g.t[k], g.z1[k].re, g.z1[k].im, g.z2[k].re, g.z2[k].im))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gamma(path: &Path) -> Result<CurveBoundarySample> {
    let mut r = reader(path)?;
    expect_header(&mut r, &GAMMA_COLS, path)?;
    let (mut t, mut z1, mut z2) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        t.push(field(&rec, 0, path)?);
        z1.push(Complex64::new(field(&rec, 1, path)?, field(&rec, 2, path)?));
        z2.push(Complex64::new(field(&rec, 3, path)?, field(&rec, 4, path)?));
    }
    CurveBoundarySample::new(t, z1, z2)
}

/// Writes one row per reconstructed point; rejected queries go to the sidecar.
pub fn write_cloud(path: &Path, cloud: &SurfaceCloud) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["a_re", "a_im", "count", "sheet", "z2_re", "z2_im", "component", "residual"])?;
    for s in &cloud.sheets {
        let comp = s.component.map(|c| c.to_string()).unwrap_or_default();
        for (k, v) in s.values.iter().enumerate() {
            w.write_record([
                s.a.re.to_string(),
                s.a.im.to_string(),
                s.count.to_string(),
                k.to_string(),
                v.re.to_string(),
                v.im.to_string(),
                comp.clone(),
                s.residual.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let rejected: Vec<(Complex64, &str)> = cloud.rejected.iter().map(|(a, why)| (*a, why.as_str())).collect();
    write_json(&sidecar(path), &rejected)
}

/// Boundary values of a complex field as `node,re,im`, e.g. the points of a region boundary.
pub fn write_points(path: &Path, z: &[Complex64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "re", "im"])?;
    for (k, v) in z.iter().enumerate() {
        w.serialize((k, v.re, v.im))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<Vec<Complex64>> {
    let mut r = reader(path)?;
    expect_header(&mut r, &["node", "re", "im"], path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(Complex64::new(field(&rec, 1, path)?, field(&rec, 2, path)?));
    }
    Ok(out)
}
