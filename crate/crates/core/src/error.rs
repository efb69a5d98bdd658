use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("mesh file parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("region is empty")]
    EmptyRegion,
    #[error("region covers the whole domain")]
    FullRegion,
    #[error("ambiguous projection: minimizers {0:?} and {1:?} are both optimal")]
    AmbiguousProjection([f64; 2], [f64; 2]),
    #[error("target mass {mass} outside (0, {area})")]
    MassOutOfRange { mass: f64, area: f64 },
    #[error("quadrature failed to reach tolerance {0:e}")]
    QuadratureFailure(f64),
    #[error("profile ODE did not reach 1 before t = {0}")]
    NonTermination(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("field length {got} does not match node count {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("dirichlet field has nonzero value {value} at boundary node {node}")]
    BoundaryTrace { node: usize, value: f64 },
    #[error("volume {0} too large for the small-volume candidate family")]
    VolumeTooLarge(f64),
    #[error("mass {target} unreachable by the layer shift (achieved {achieved})")]
    MassUnreachable { target: f64, achieved: f64 },
    #[error("support of the field reaches the boundary (radius {radius} + layer {layer} >= {limit})")]
    SupportTouchesBoundary { radius: f64, layer: f64, limit: f64 },
    #[error("parameter cap violated: {0}")]
    CapViolation(String),
    #[error("barycenter undefined for a field with zero L1 mass")]
    ZeroMass,
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("time step collapsed below {0:e}")]
    StepCollapse(f64),
    #[error("newton did not converge: residual {residual:e} after {iterations} iterations")]
    DidNotConverge { residual: f64, iterations: usize },
    #[error("singular KKT matrix (pivot {pivot:e} at row {row})")]
    SingularKkt { row: usize, pivot: f64 },
    #[error("factorization failed: {0}")]
    FactorizationFailure(String),
}
