//! The reconstruction `Λσ̂ → ψ̂|∂X → F|∂X → ∂Y → Y → σ` as a sequence of stages.
//!
//! Every stage writes its artifacts to the output directory as soon as it
//! finishes, so a failed run keeps everything computed before the failure
//! together with a `report.json` naming the stage that failed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cgo::{recover_f_boundary, BoundaryIntegral, BoundaryMap, CgoOptions, RecoveryOptions, SpectralParameterSet};
use crate::curve::{reconstruct_surface, CurveBoundarySample, CurveOptions, SurfaceCloud};
use crate::fields::{ConductivityField, Domain, Grid2D};
use crate::forward::{dtn_transport, BoundaryDiscretization, DtnMatrix, MeshOptions};
use crate::io;
use crate::phantom::Phantom;
use crate::sigma::{dtn_refined, reconstruct_sigma_difference, SigmaOptions, SigmaReconstruction};
use crate::{Error, Result};

/// Where the boundary data comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Named phantom on the unit disk, measured by a forward solve on a mesh
    /// twice as fine as the one used for the conductivity fit.
    Phantom(String),
    /// `Λσ̂` from a file, with `Λ₀` from a file in the same discretization or,
    /// if absent, from a forward solve at the data resolution.
    Files { dtn: PathBuf, dtn0: Option<PathBuf> },
}

/// Laplace reference subtracted from the transported data before the conductivity fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// `Λ₀` of the data transported with `Λσ̂`. The difference `W(Λσ̂ − Λ₀)`
    /// is unchanged by the transport, which keeps the fit insensitive to
    /// node-level error in `F|∂X`; exact when `F|∂X` extends conformally.
    #[default]
    Transported,
    /// A forward solve for `σ = 1` on the recovered `Y`.
    Region,
}

/// Single-run tolerances used by [`check_gauge_equivalence`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GaugeTolerances {
    /// Sup distance between boundary maps.
    pub boundary: f64,
    /// Hausdorff distance between regions.
    pub region: f64,
    /// Relative L² distance between conductivities.
    pub sigma: f64,
}

impl Default for GaugeTolerances {
    fn default() -> Self {
        GaugeTolerances { boundary: 1e-2, region: 1e-2, sigma: 1e-2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: Source,
    /// Boundary nodes of a phantom's disk.
    pub boundary_nodes: usize,
    /// Mesh of the data; phantom data is computed on twice this resolution.
    pub mesh: MeshOptions,
    /// Moduli of the spectral parameters, strictly increasing.
    pub ladder: Vec<f64>,
    pub directions: usize,
    pub eps: f64,
    pub cgo: CgoOptions,
    pub recovery: RecoveryOptions,
    pub curve: CurveOptions,
    /// Cells per side of the grid on `Y`.
    pub grid_cells: usize,
    pub sigma: SigmaOptions,
    pub reference: Reference,
    pub gauge: GaugeTolerances,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: Source::Phantom("identity".into()),
            boundary_nodes: 128,
            mesh: MeshOptions { rings: 32, min_ring: 32 },
            ladder: vec![4.0, 6.0, 8.0, 12.0],
            directions: 8,
            eps: 0.25,
            cgo: CgoOptions::default(),
            recovery: RecoveryOptions::default(),
            curve: CurveOptions::default(),
            grid_cells: 64,
            sigma: SigmaOptions::default(),
            reference: Reference::Transported,
            gauge: GaugeTolerances::default(),
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spectral_parameters(&self) -> SpectralParameterSet {
        SpectralParameterSet::ladder(&self.ladder, self.directions, self.eps)
    }

    /// Checks the configuration before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if let Source::Phantom(name) = &self.source {
            if Phantom::from_name(name).is_none() {
                return bad(format!("unknown phantom {name:?}; known: {}", Phantom::NAMES.join(", ")));
            }
        }
        if self.boundary_nodes < 16 || self.boundary_nodes % 2 != 0 {
            return bad(format!("boundary_nodes must be even and at least 16, got {}", self.boundary_nodes));
        }
        if self.mesh.rings < 2 || self.mesh.min_ring < 8 {
            return bad("mesh needs at least 2 rings and 8 nodes per ring".into());
        }
        if self.ladder.is_empty() || self.ladder.iter().any(|m| !(*m > 0.0)) {
            return bad("ladder must be a nonempty list of positive moduli".into());
        }
        if self.ladder.windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!("ladder must be strictly increasing, got {:?}", self.ladder));
        }
        if self.directions == 0 || !(self.eps > 0.0) {
            return bad("need at least one direction and a positive eps".into());
        }
        if self.grid_cells < 16 {
            return bad(format!("grid_cells must be at least 16, got {}", self.grid_cells));
        }
        let tolerances = [
            ("cgo.cond_max", self.cgo.cond_max),
            ("cgo.lambda_min", self.cgo.lambda_min),
            ("recovery.tol", self.recovery.tol),
            ("curve.exclusion", self.curve.exclusion),
            ("curve.integer_tol", self.curve.integer_tol),
            ("curve.residual_tol", self.curve.residual_tol),
            ("curve.branch_separation", self.curve.branch_separation),
            ("sigma.tol", self.sigma.tol),
            ("sigma.s_min", self.sigma.s_min),
            ("gauge.boundary", self.gauge.boundary),
            ("gauge.region", self.gauge.region),
            ("gauge.sigma", self.gauge.sigma),
        ];
        for (name, v) in tolerances {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.sigma.alpha_ladder.is_empty() || self.sigma.alpha_ladder.iter().any(|a| !(*a >= 0.0)) {
            return bad("sigma.alpha_ladder must be nonempty and nonnegative".into());
        }
        self.spectral_parameters().validate(self.cgo.lambda_min)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub residual: f64,
    pub tolerance: f64,
    pub ok: bool,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
    /// `stage: error` of the stage that failed, if any.
    pub failed: Option<String>,
    /// `sup |F|∂X − F_true|∂X|` when the phantom's boundary map is known.
    pub boundary_map_error: Option<f64>,
    /// Relative L² error of `σ` when the phantom's isotropic form is known.
    pub sigma_error: Option<f64>,
    pub seconds: f64,
}

impl PipelineReport {
    pub fn all_ok(&self) -> bool {
        self.failed.is_none() && self.stages.iter().all(|s| s.ok)
    }
}

/// `Λσ̂` and the reference `Λ₀` in the same discretization.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub lam: DtnMatrix,
    pub lam0: DtnMatrix,
}

impl Measurement {
    /// Forward solves for a phantom on the unit disk at twice the resolution of `mesh`.
    pub fn phantom(p: Phantom, nodes: usize, mesh: MeshOptions) -> Result<Self> {
        let bd = BoundaryDiscretization::circle(Complex64::new(0.0, 0.0), 1.0, nodes);
        Ok(Measurement { lam: dtn_refined(&p, &bd, mesh)?, lam0: dtn_refined(&Phantom::Identity, &bd, mesh)? })
    }
}

/// Everything a run produces.
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub trace_count: usize,
    pub map: BoundaryMap,
    pub cloud: SurfaceCloud,
    /// `∂Y`, the image of the boundary nodes.
    pub region: Vec<Complex64>,
    pub sigma: SigmaReconstruction,
}

struct Run<'a> {
    report: PipelineReport,
    dir: Option<&'a Path>,
}

impl Run<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<(T, f64, f64, String)>) -> Result<T> {
        let start = Instant::now();
        match f() {
            Ok((value, residual, tolerance, detail)) => {
                self.report.stages.push(StageReport {
                    stage: name.into(),
                    residual,
                    tolerance,
                    ok: residual <= tolerance,
                    seconds: start.elapsed().as_secs_f64(),
                    detail,
                });
                self.save()?;
                Ok(value)
            }
            Err(e) => {
                self.report.failed = Some(format!("{name}: {e}"));
                // the stage error matters more than a failure to record it
                let _ = self.save();
                Err(Error::Stage { stage: name.into(), source: Box::new(e) })
            }
        }
    }

    fn path(&self, file: &str) -> Option<PathBuf> {
        self.dir.map(|d| d.join(file))
    }

    fn save(&self) -> Result<()> {
        match self.path("report.json") {
            Some(p) => io::write_json(&p, &self.report),
            None => Ok(()),
        }
    }
}

fn relative_defect(lam: &DtnMatrix) -> f64 {
    let scale = lam.data.amax().max(f64::MIN_POSITIVE);
    lam.asymmetry().max(lam.kernel_defect() / (scale * lam.len() as f64))
}

/// Runs every stage on the configured source.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        io::write_json(&d.join("config.json"), cfg)?;
    }
    let start = Instant::now();
    let mut run = Run { report: PipelineReport::default(), dir };
    let (meas, phantom) = match &cfg.source {
        Source::Phantom(name) => {
            let p = Phantom::from_name(name).expect("validated");
            let meas = run.stage("forward", || {
                let m = Measurement::phantom(p, cfg.boundary_nodes, cfg.mesh)?;
                if let Some(d) = dir {
                    io::write_dtn(&d.join("dtn.csv"), &m.lam)?;
                    io::write_dtn(&d.join("dtn0.csv"), &m.lam0)?;
                }
                let r = relative_defect(&m.lam).max(relative_defect(&m.lam0));
                Ok((m, r, 1e-8, format!("{} boundary nodes", cfg.boundary_nodes)))
            })?;
            (meas, Some(p))
        }
        Source::Files { dtn, dtn0 } => {
            let meas = run.stage("load", || {
                let lam = io::read_dtn(dtn)?;
                let lam0 = match dtn0 {
                    Some(p) => io::read_dtn(p)?,
                    None => dtn_refined(&Phantom::Identity, &lam.bd, cfg.mesh)?,
                };
                let (r, detail) = (relative_defect(&lam), format!("{} boundary nodes", lam.len()));
                Ok((Measurement { lam, lam0 }, r, 1e-8, detail))
            })?;
            (meas, None)
        }
    };
    let mut out = run_stages(&mut run, &meas, cfg)?;
    if let Some(p) = phantom {
        if p != Phantom::AnisoDisk {
            // every other phantom is isotropic near the boundary with F|∂X = Id
            out.report.boundary_map_error = Some(out.map.error(&out.map.nodes));
        }
        if let Some(truth) = p.isotropic_truth() {
            out.report.sigma_error = Some(out.sigma.relative_l2(&truth));
        }
    }
    out.report.seconds = start.elapsed().as_secs_f64();
    run.report = out.report.clone();
    run.save()?;
    Ok(out)
}

/// Runs the stages after data acquisition on a given measurement.
pub fn run_measurement(meas: &Measurement, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if let Some(d) = cfg.output_dir.as_deref() {
        std::fs::create_dir_all(d)?;
    }
    let start = Instant::now();
    let mut run = Run { report: PipelineReport::default(), dir: cfg.output_dir.as_deref() };
    let mut out = run_stages(&mut run, meas, cfg)?;
    out.report.seconds = start.elapsed().as_secs_f64();
    run.report = out.report.clone();
    run.save()?;
    Ok(out)
}

fn run_stages(run: &mut Run, meas: &Measurement, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let dir = run.dir;
    let trace = run.stage("cgo", || {
        let bi = BoundaryIntegral::new(&meas.lam, &meas.lam0)?;
        let trace = bi.traces(&cfg.spectral_parameters(), &cfg.cgo)?;
        if let Some(d) = dir {
            io::write_trace(&d.join("traces.csv"), &trace)?;
        }
        let cond = trace.entries.iter().map(|e| e.cond).fold(0.0, f64::max);
        let detail = format!("{} solves, {} near-exceptional samples skipped", trace.entries.len(), trace.skipped.len());
        Ok((trace, cond, cfg.cgo.cond_max, detail))
    })?;
    let map = run.stage("recover", || {
        let map = recover_f_boundary(&trace, &cfg.recovery)?;
        if let Some(d) = dir {
            io::write_boundary_map(&d.join("boundary_map.csv"), &map)?;
        }
        let change = match map.ladder.len() {
            0 | 1 => 0.0,
            n => sup_distance(&map.ladder[n - 1].1, &map.ladder[n - 2].1),
        };
        let detail = format!("{} ladder moduli", map.ladder.len());
        Ok((map, change, cfg.recovery.tol, detail))
    })?;
    let region = map.values.clone();
    let (grid, cloud) = run.stage("curve", || {
        let grid = region_grid(&region, cfg.grid_cells)?;
        let gamma = planar_curve(&region)?;
        let cloud = reconstruct_surface(&gamma, &grid.centers(), &cfg.curve)?;
        if let Some(d) = dir {
            io::write_gamma(&d.join("gamma.csv"), &gamma)?;
            io::write_cloud(&d.join("cloud.csv"), &cloud)?;
        }
        let residual = cloud.sheets.iter().map(|s| s.residual).fold(0.0, f64::max);
        let inside = cloud.sheets.iter().filter(|s| s.count == 1).count();
        let multiple = cloud.sheets.iter().filter(|s| s.count > 1).count();
        let detail = format!("{inside} cells on one sheet, {multiple} on several, {} rejected", cloud.rejected.len());
        Ok(((grid, cloud), residual, cfg.curve.residual_tol, detail))
    })?;
    let (lam_y, lam0_y) = run.stage("transport", || {
        let lam_y = dtn_transport(&meas.lam, &region)?;
        let lam0_y = match cfg.reference {
            Reference::Transported => dtn_transport(&meas.lam0, &region)?,
            Reference::Region => dtn_refined(&Phantom::Identity, &lam_y.bd, cfg.mesh)?,
        };
        if let Some(d) = dir {
            io::write_dtn(&d.join("dtn_y.csv"), &lam_y)?;
            io::write_dtn(&d.join("dtn0_y.csv"), &lam0_y)?;
            io::write_grid(&d.join("grid_y.json"), &grid)?;
        }
        let r = relative_defect(&lam_y);
        Ok(((lam_y, lam0_y), r, 1e-8, String::new()))
    })?;
    let sigma = run.stage("sigma", || {
        let rec = reconstruct_sigma_difference(&lam_y, &lam0_y, &grid, &cfg.sigma)?;
        if let Some(d) = dir {
            io::write_conductivity(&d.join("sigma.csv"), &ConductivityField::isotropic(&grid, &rec.s))?;
            io::write_json(&d.join("misfit.json"), &rec.report)?;
        }
        let misfit = rec.report.final_misfit();
        let detail = format!("{} Gauss–Newton steps, converged: {}", rec.report.history.len(), rec.report.converged);
        Ok((rec, misfit, cfg.sigma.tol, detail))
    })?;
    Ok(PipelineOutput { report: run.report.clone(), trace_count: trace.entries.len(), map, cloud, region, sigma })
}

/// Closed planar curve `(z, 0)` through `nodes`, for the sheet count of `Y`.
pub fn planar_curve(nodes: &[Complex64]) -> Result<CurveBoundarySample> {
    let n = nodes.len();
    let t = (0..=n).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64).collect();
    let mut z1 = nodes.to_vec();
    z1.push(nodes[0]);
    CurveBoundarySample::new(t, z1, vec![Complex64::new(0.0, 0.0); n + 1])
}

/// Square grid around the region bounded by `nodes`, with a band of five
/// empty cells around it.
pub fn region_grid(nodes: &[Complex64], cells: usize) -> Result<Grid2D> {
    const BAND: usize = 5;
    if cells < 2 * BAND + 4 {
        return Err(Error::Validation(format!("{cells} cells leave no room inside the band")));
    }
    let (mut lo, mut hi) = (nodes[0], nodes[0]);
    for z in nodes {
        lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let half = 0.5 * (hi.re - lo.re).max(hi.im - lo.im);
    let h = 2.0 * half / (cells - 2 * BAND) as f64;
    let grid = Grid2D::square((lo + hi) * 0.5, 0.5 * h * cells as f64, cells, Domain::polygon(nodes))?;
    grid.validate()?;
    Ok(grid)
}

fn sup_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    /// `‖F₁|∂X − F₂|∂X‖∞`.
    pub boundary_distance: f64,
    /// Hausdorff distance of the reconstructed regions.
    pub region_distance: f64,
    /// `‖σ₁ − σ₂‖₂/‖σ₁‖₂` on the first run's grid.
    pub sigma_distance: f64,
    pub tolerances: GaugeTolerances,
    /// Distances are compared with this multiple of the tolerances.
    pub factor: f64,
    pub within: bool,
    pub first: PipelineReport,
    pub second: PipelineReport,
}

/// Multiple of the single-run tolerances allowed between gauge-equivalent runs.
pub const GAUGE_FACTOR: f64 = 3.0;

/// Runs the pipeline on two measurements and compares the outputs.
///
/// With `cfg.output_dir` set, the runs write to its subdirectories `first`
/// and `second`.
pub fn check_gauge_equivalence(a: &Measurement, b: &Measurement, cfg: &PipelineConfig) -> Result<GaugeReport> {
    let same = a.lam.len() == b.lam.len() && sup_distance(&a.lam.bd.nodes, &b.lam.bd.nodes) <= 1e-12;
    if !same {
        return Err(Error::Validation("the two maps live on different boundary discretizations".into()));
    }
    let sub = |name: &str| PipelineConfig { output_dir: cfg.output_dir.as_ref().map(|d| d.join(name)), ..cfg.clone() };
    let first = run_measurement(a, &sub("first"))?;
    let second = run_measurement(b, &sub("second"))?;
    let boundary_distance = sup_distance(&first.map.values, &second.map.values);
    let region_distance = hausdorff(&first.region, &second.region);
    let sigma_distance = sigma_distance(&first.sigma, &second.sigma);
    let tol = cfg.gauge;
    let within = boundary_distance <= GAUGE_FACTOR * tol.boundary
        && region_distance <= GAUGE_FACTOR * tol.region
        && sigma_distance <= GAUGE_FACTOR * tol.sigma;
    let report = GaugeReport {
        boundary_distance,
        region_distance,
        sigma_distance,
        tolerances: tol,
        factor: GAUGE_FACTOR,
        within,
        first: first.report,
        second: second.report,
    };
    if let Some(d) = cfg.output_dir.as_deref() {
        io::write_json(&d.join("gauge.json"), &report)?;
    }
    Ok(report)
}

/// `‖a − b‖₂/‖a‖₂` over `a`'s masked cells, with `b` interpolated bilinearly.
pub fn sigma_distance(a: &SigmaReconstruction, b: &SigmaReconstruction) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.grid.len() {
        if !a.grid.in_mask(k) {
            continue;
        }
        let z = a.grid.center_of(k);
        let vb = match b.grid.interp_weights(z) {
            Some(w) => w.iter().map(|(c, wt)| wt * b.s[*c]).sum(),
            None => 1.0,
        };
        num += (a.s[k] - vb).powi(2);
        den += a.s[k] * a.s[k];
    }
    (num / den).sqrt()
}

/// Hausdorff distance between the closed regions bounded by two polygons.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    one_sided(a, b).max(one_sided(b, a))
}

/// `sup_{p ∈ A} dist(p, B)`; the supremum is attained on `∂A` outside `B`.
fn one_sided(a: &[Complex64], b: &[Complex64]) -> f64 {
    let inside_b = Domain::polygon(b);
    let n = a.len();
    let mut worst = 0.0f64;
    for k in 0..n {
        // sample each edge of ∂A, so that a vertex inside B does not hide an edge crossing out of it
        for j in 0..4 {
            let p = a[k] + (a[(k + 1) % n] - a[k]) * (j as f64 / 4.0);
            if !inside_b.contains(p) {
                worst = worst.max(polyline_distance(p, b));
            }
        }
    }
    worst
}

fn polyline_distance(p: Complex64, poly: &[Complex64]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            let d = b - a;
            let t = (((p - a) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
            (p - a - d * t).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
