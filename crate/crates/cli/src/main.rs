use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcit::beltrami::{solve_beltrami, BeltramiOptions};
use qcit::cgo::{recover_f_boundary, BoundaryIntegral, CgoOptions, RecoveryOptions, SpectralParameterSet};
use qcit::curve::{reconstruct_surface, CurveOptions};
use qcit::fields::{BeltramiField, Domain, TensorField};
use qcit::forward::{dtn_assemble, dtn_transport, BoundaryDiscretization, MeshOptions};
use qcit::io;
use qcit::phantom::Phantom;
use qcit::pipeline::{self, check_gauge_equivalence, run_pipeline, Measurement, PipelineConfig, Source};
use qcit::sigma::{dtn_refined, reconstruct_sigma, reconstruct_sigma_difference, SigmaOptions};
use qcit::{ConductivityField, Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "qcit", version, about = "Reconstruction of anisotropic conductivities from boundary measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dirichlet-to-Neumann matrix of a conductivity.
    Forward(ForwardArgs),
    /// Principal solution of the Beltrami equation.
    Beltrami(BeltramiArgs),
    /// Boundary traces of the CGO solutions.
    Cgo(CgoArgs),
    /// Boundary values of the isothermal map from CGO traces.
    Recover(RecoverArgs),
    /// Points of the surface bounded by a curve in ℂ².
    Curve(CurveArgs),
    /// DtN matrix carried to the image boundary.
    Transport(TransportArgs),
    /// Isotropic conductivity fitted to a DtN matrix.
    Sigma(SigmaArgs),
    /// Every stage from a JSON configuration.
    Pipeline(PipelineArgs),
    /// Pipeline on two DtN matrices, comparing the outputs.
    CheckGauge(GaugeArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Rings of the boundary-fitted mesh.
    #[arg(long, default_value_t = 32)]
    rings: usize,
    /// Fewest nodes on a ring.
    #[arg(long, default_value_t = 32)]
    min_ring: usize,
}

impl MeshArgs {
    fn options(&self) -> MeshOptions {
        MeshOptions { rings: self.rings, min_ring: self.min_ring }
    }
}

#[derive(Args)]
struct ForwardArgs {
    /// Conductivity CSV (`i,j,s11,s12,s22`).
    #[arg(long, conflicts_with = "phantom", required_unless_present = "phantom")]
    sigma: Option<PathBuf>,
    /// Grid JSON of the conductivity; defaults to the sidecar of `--sigma`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Named phantom on the unit disk instead of `--sigma`.
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long, default_value_t = 128)]
    nodes: usize,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Solve on a mesh twice as fine as `--rings`/`--min-ring`.
    #[arg(long)]
    refined: bool,
    /// Relative Gaussian noise added to the matrix.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the DtN matrix of `σ = 1` on the same boundary.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct BeltramiArgs {
    /// Complex field CSV (`i,j,re,im`) with its grid sidecar.
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct CgoArgs {
    #[arg(long)]
    dtn: PathBuf,
    /// DtN matrix of `σ = 1` in the same discretization; computed when absent.
    #[arg(long)]
    dtn0: Option<PathBuf>,
    /// Comma-separated moduli of the spectral parameters.
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    /// Directions per modulus, equally spaced.
    #[arg(long, default_value_t = 1)]
    directions: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long)]
    cond_max: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    /// Trace CSV written by `qcit cgo`.
    #[arg(long)]
    traces: PathBuf,
    /// Largest allowed change between successive moduli.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    /// Curve CSV (`t,z1_re,z1_im,z2_re,z2_im`).
    #[arg(long)]
    gamma: PathBuf,
    /// Query points CSV (`node,re,im`).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    exclusion: Option<f64>,
    #[arg(long)]
    integer_tol: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
}

#[derive(Args)]
struct TransportArgs {
    #[arg(long)]
    dtn: PathBuf,
    /// Boundary map CSV written by `qcit recover`.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a grid JSON over the image region.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    grid_cells: usize,
}

#[derive(Args)]
struct SigmaArgs {
    /// DtN matrix on the boundary of the grid's domain.
    #[arg(long)]
    dtn: PathBuf,
    /// Reference DtN matrix of `σ = 1` in the discretization of `--dtn`; the
    /// difference is fitted when given.
    #[arg(long)]
    dtn0: Option<PathBuf>,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `default` or comma-separated regularization weights.
    #[arg(long, default_value = "default")]
    alpha_ladder: String,
    /// Misfit history JSON; defaults to `<out>.misfit.json`.
    #[arg(long)]
    misfit: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    param_cells: Option<usize>,
    #[arg(long)]
    rings: Option<usize>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured source.
    #[arg(long)]
    phantom: Option<String>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GaugeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires = "phantom_b", conflicts_with = "dtn_a")]
    phantom_a: Option<String>,
    #[arg(long)]
    phantom_b: Option<String>,
    #[arg(long, requires = "dtn_b", required_unless_present = "phantom_a")]
    dtn_a: Option<PathBuf>,
    #[arg(long)]
    dtn_b: Option<PathBuf>,
    /// Reference `σ = 1` matrix shared by `--dtn-a` and `--dtn-b`.
    #[arg(long)]
    dtn0: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn phantom(name: &str) -> Result<Phantom> {
    Phantom::from_name(name)
        .ok_or_else(|| Error::Validation(format!("unknown phantom {name:?}; known: {}", Phantom::NAMES.join(", "))))
}

fn boundary(domain: &Domain, n: usize) -> Result<BoundaryDiscretization> {
    match domain {
        Domain::Disk { center, radius } => {
            Ok(BoundaryDiscretization::circle(qcit::Complex64::new(center[0], center[1]), *radius, n))
        }
        Domain::Polygon { .. } => BoundaryDiscretization::polygonal(domain.boundary_nodes(n)),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn forward(a: ForwardArgs) -> Result<()> {
    let mesh = a.mesh.options();
    let (sigma, domain): (Box<dyn TensorField>, Domain) = match (&a.phantom, &a.sigma) {
        (Some(name), _) => (Box::new(phantom(name)?), Domain::unit_disk()),
        (None, Some(path)) => {
            let grid = io::read_grid(a.grid.as_deref().unwrap_or(&io::sidecar(path)))?;
            let field = io::read_conductivity(path, &grid)?;
            field.validate()?;
            (Box::new(field), grid.domain.clone())
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let bd = boundary(&domain, a.nodes)?;
    let solve = |s: &dyn TensorField| if a.refined { dtn_refined(s, &bd, mesh) } else { dtn_assemble(s, &bd, mesh) };
    let mut lam = solve(sigma.as_ref())?;
    if let Some(rel) = a.noise {
        lam = lam.with_noise(rel, a.seed);
    }
    io::write_dtn(&a.out, &lam)?;
    if let Some(path) = &a.reference {
        io::write_dtn(path, &solve(&Phantom::Identity)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BeltramiReport {
    residual: f64,
    iterations: usize,
    k: f64,
    ratios: Vec<f64>,
}

fn beltrami(a: BeltramiArgs) -> Result<()> {
    let grid = io::read_grid(&io::sidecar(&a.mu))?;
    let mu = BeltramiField::new(&grid, io::read_complex_field(&a.mu, &grid)?)?;
    let mut opts = BeltramiOptions::default();
    opts.tol = a.tol.unwrap_or(opts.tol);
    opts.max_iter = a.max_iter.unwrap_or(opts.max_iter);
    let sol = solve_beltrami(&mu, opts)?;
    io::write_complex_field(&a.out, &sol.spectral.grid(grid.domain.clone()), &sol.w)?;
    let report = BeltramiReport { residual: sol.residual, iterations: sol.iterations, k: sol.k, ratios: sol.ratios };
    io::write_json(&a.report.unwrap_or_else(|| a.out.with_extension("report.json")), &report)?;
    print_json(&report)
}

fn cgo(a: CgoArgs) -> Result<()> {
    if a.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!("--lambdas must be strictly increasing, got {:?}", a.lambdas)));
    }
    let lam = io::read_dtn(&a.dtn)?;
    let lam0 = match &a.dtn0 {
        Some(p) => io::read_dtn(p)?,
        None => dtn_refined(&Phantom::Identity, &lam.bd, a.mesh.options())?,
    };
    let mut opts = CgoOptions::default();
    opts.cond_max = a.cond_max.unwrap_or(opts.cond_max);
    opts.lambda_min = a.lambda_min.unwrap_or(opts.lambda_min);
    let set = SpectralParameterSet::ladder(&a.lambdas, a.directions, a.eps);
    set.validate(opts.lambda_min)?;
    let trace = BoundaryIntegral::new(&lam, &lam0)?.traces(&set, &opts)?;
    io::write_trace(&a.out, &trace)
}

fn recover(a: RecoverArgs) -> Result<()> {
    let trace = io::read_trace(&a.traces)?;
    let mut opts = RecoveryOptions::default();
    opts.tol = a.tol.unwrap_or(opts.tol);
    let map = recover_f_boundary(&trace, &opts)?;
    io::write_boundary_map(&a.out, &map)
}

fn curve(a: CurveArgs) -> Result<()> {
    let gamma = io::read_gamma(&a.gamma)?;
    let queries = io::read_points(&a.queries)?;
    let mut opts = CurveOptions::default();
    opts.exclusion = a.exclusion.unwrap_or(opts.exclusion);
    opts.integer_tol = a.integer_tol.unwrap_or(opts.integer_tol);
    opts.residual_tol = a.residual_tol.unwrap_or(opts.residual_tol);
    let cloud = reconstruct_surface(&gamma, &queries, &opts)?;
    io::write_cloud(&a.out, &cloud)
}

fn transport(a: TransportArgs) -> Result<()> {
    let lam = io::read_dtn(&a.dtn)?;
    let map = io::read_boundary_map(&a.map)?;
    io::write_dtn(&a.out, &dtn_transport(&lam, &map.values)?)?;
    if let Some(path) = &a.grid_out {
        io::write_grid(path, &pipeline::region_grid(&map.values, a.grid_cells)?)?;
    }
    Ok(())
}

fn alpha_ladder(s: &str) -> Result<Vec<f64>> {
    if s == "default" {
        return Ok(SigmaOptions::default().alpha_ladder);
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Validation(format!("alpha ladder entry {v:?}: {e}"))))
        .collect()
}

fn sigma(a: SigmaArgs) -> Result<()> {
    let lam = io::read_dtn(&a.dtn)?;
    let grid = io::read_grid(&a.grid)?;
    let mut opts = SigmaOptions { alpha_ladder: alpha_ladder(&a.alpha_ladder)?, ..SigmaOptions::default() };
    opts.max_iter = a.max_iter.unwrap_or(opts.max_iter);
    opts.tol = a.tol.unwrap_or(opts.tol);
    opts.param_cells = a.param_cells.unwrap_or(opts.param_cells);
    opts.rings = a.rings.unwrap_or(opts.rings);
    let rec = match &a.dtn0 {
        Some(p) => reconstruct_sigma_difference(&lam, &io::read_dtn(p)?, &grid, &opts)?,
        None => reconstruct_sigma(&lam, &grid, &opts)?,
    };
    io::write_conductivity(&a.out, &ConductivityField::isotropic(&grid, &rec.s))?;
    io::write_json(&a.misfit.unwrap_or_else(|| a.out.with_extension("misfit.json")), &rec.report)
}

fn config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(a: PipelineArgs) -> Result<()> {
    let mut cfg = config(a.config.as_deref())?;
    if let Some(name) = a.phantom {
        cfg.source = Source::Phantom(name);
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let out = run_pipeline(&cfg)?;
    print_json(&out.report)
}

fn measurement(dtn: &Path, dtn0: Option<&Path>, cfg: &PipelineConfig) -> Result<Measurement> {
    let lam = io::read_dtn(dtn)?;
    let lam0 = match dtn0 {
        Some(p) => io::read_dtn(p)?,
        None => dtn_refined(&Phantom::Identity, &lam.bd, cfg.mesh)?,
    };
    Ok(Measurement { lam, lam0 })
}

fn check_gauge(a: GaugeArgs) -> Result<()> {
    let mut cfg = config(a.config.as_deref())?;
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let (first, second) = match (&a.phantom_a, &a.phantom_b, &a.dtn_a, &a.dtn_b) {
        (Some(pa), Some(pb), _, _) => (
            Measurement::phantom(phantom(pa)?, cfg.boundary_nodes, cfg.mesh)?,
            Measurement::phantom(phantom(pb)?, cfg.boundary_nodes, cfg.mesh)?,
        ),
        (_, _, Some(da), Some(db)) => (measurement(da, a.dtn0.as_deref(), &cfg)?, measurement(db, a.dtn0.as_deref(), &cfg)?),
        _ => unreachable!("clap requires a pair"),
    };
    let report = check_gauge_equivalence(&first, &second, &cfg)?;
    print_json(&report)
}

fn stage_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::Forward(_) => "forward",
        Command::Beltrami(_) => "beltrami",
        Command::Cgo(_) => "cgo",
        Command::Recover(_) => "recover",
        Command::Curve(_) => "curve",
        Command::Transport(_) => "transport",
        Command::Sigma(_) => "sigma",
        Command::Pipeline(_) => "pipeline",
        Command::CheckGauge(_) => "check-gauge",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = stage_of(&cli.command);
    let result = match cli.command {
        Command::Forward(a) => forward(a),
        Command::Beltrami(a) => beltrami(a),
        Command::Cgo(a) => cgo(a),
        Command::Recover(a) => recover(a),
        Command::Curve(a) => curve(a),
        Command::Transport(a) => transport(a),
        Command::Sigma(a) => sigma(a),
        Command::Pipeline(a) => run(a),
        Command::CheckGauge(a) => check_gauge(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (tag, inner) = match &e {
                Error::Stage { stage, source } => (stage.as_str(), source.as_ref()),
                _ => (stage, &e),
            };
            eprintln!("error [{tag}]: {inner}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
