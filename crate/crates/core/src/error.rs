use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("conductivity is not positive definite at cell {cell} (det = {det:e})")]
    NonSpd { cell: usize, det: f64 },
    #[error("metric is degenerate at cell {cell}")]
    DegenerateMetric { cell: usize },
    #[error("inverse map failed at {point}")]
    NonInvertible { point: String },
    #[error("linear solver did not converge: {0}")]
    SolverDivergence(String),
    #[error("boundary map is not strictly increasing at node {node}")]
    NonMonotone { node: usize },
    #[error("gluing operator is singular (condition {cond:e})")]
    SingularGlue { cond: f64 },
    #[error("support violates the spectral margin: {0}")]
    Alias(String),
    #[error("fixed-point iteration failed to contract (residual {residual:e} after {iterations} iterations)")]
    NoContraction { residual: f64, iterations: usize },
    #[error("kernel evaluated at its singularity")]
    EvalSingular,
    #[error("spectral parameter {lambda} is near-exceptional (condition {cond:e})")]
    NearExceptional { lambda: String, cond: f64 },
    #[error("boundary integral solve failed: {0}")]
    SolveFailure(String),
    #[error("inconsistent branch of log: {0}")]
    BranchAmbiguity(String),
    #[error("ladder did not converge: {0}")]
    NoConvergence(String),
    #[error("query point {point} lies within {dist:e} of the projected curve")]
    OnProjection { point: String, dist: f64 },
    #[error("winding number {value} is not close to an integer")]
    NonInteger { value: f64 },
    #[error("root recovery is ill-conditioned (residual {residual:e})")]
    IllConditioned { residual: f64 },
    #[error("sheet count differs inside component {component}: {a} vs {b}")]
    InconsistentSheetCount { component: usize, a: usize, b: usize },
    #[error("DtN convention mismatch: {0} vs {1}")]
    ConventionMismatch(String, String),
    #[error("misfit stagnated at {misfit:e}")]
    Stagnation { misfit: f64 },
    #[error("conductivity left the admissible range")]
    NonPositive,
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::Validation(_)
                | Error::NonSpd { .. }
                | Error::DegenerateMetric { .. }
                | Error::NonMonotone { .. }
                | Error::Alias(_)
                | Error::ConventionMismatch(..)
                | Error::OnProjection { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
