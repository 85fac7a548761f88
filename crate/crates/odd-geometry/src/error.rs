use thiserror::Error;

/// Errors surfaced by geometry operations.
///
/// Evaluation of an expression at a point never errors: poles and
/// indeterminate forms are ordinary values of [`crate::expr::EvalResult`].
/// The variants here are structural or numerical failures of whole
/// operations.
#[derive(Debug, Error)]
pub enum OddError {
    #[error("expression exceeds node budget: {nodes} nodes, budget {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },

    #[error("metric entry g[{i}][{j}] failed to evaluate off the degeneracy locus at {point:?}: {what}")]
    EvaluationFailure {
        i: usize,
        j: usize,
        point: Vec<f64>,
        what: String,
    },

    #[error("frame vector {index} has identically vanishing norm; the metric is degenerate on an open set")]
    DegenerateFrame { index: usize },

    #[error("quadrature failed to reach tolerance {tol:.3e} (estimated error {err:.3e}) within {evals} evaluations")]
    QuadratureFailure { tol: f64, err: f64, evals: usize },

    #[error("field is tangent to the degeneracy locus at {point:?}: the rescaled field vanishes identically along it")]
    TangentPoleContradiction { point: Vec<f64> },

    #[error("integration stalled at a singular point near {point:?}: the rescaled speed stays below {floor:.3e}")]
    StallAtSingularity { point: Vec<f64>, floor: f64 },

    #[error("time map is not strictly monotone on [{a}, {b}]: the integrand vanishes on a subinterval")]
    NotMonotone { a: f64, b: f64 },

    #[error("connection coefficients have a non-removable pole on the locus at t = {t}")]
    PoleOnLocus { t: f64 },

    #[error("metric speed is unbounded approaching t = {t} (exceeded {bound:.3e})")]
    UnboundedSpeed { t: f64, bound: f64 },

    #[error("curve segment [{a}, {b}] has vanishing classical speed on a subinterval; no unit-speed reparametrization")]
    DegenerateSegment { a: f64, b: f64 },

    #[error("no path between {from:?} and {to:?} inside the domain box")]
    UnreachableWithinBox { from: Vec<f64>, to: Vec<f64> },

    #[error("unknown fixture {name:?}; available: {available}")]
    UnknownFixture { name: String, available: String },

    #[error("field plots require a 2-dimensional chart, got dimension {dim}")]
    NotPlanar { dim: usize },

    #[error("invalid stratum: {what}")]
    InvalidStratum { what: String },

    #[error("{what}")]
    InvalidArgument { what: String },

    #[error("metric file: {0}")]
    MetricFile(#[from] crate::metric::MetricFileError),

    #[error("expression: {0}")]
    Parse(#[from] crate::expr::ParseError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OddError>;
