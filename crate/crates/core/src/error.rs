use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("surface is not embedded: sqrt(g) = {sqrt_g:e} at (theta, phi) = ({theta:.4}, {phi:.4})")]
    NonEmbedded { sqrt_g: f64, theta: f64, phi: f64 },

    #[error("surface meets the z-axis: R = {radius:e} at (theta, phi) = ({theta:.4}, {phi:.4})")]
    AxisIntersection { radius: f64, theta: f64, phi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("radial scaling produced a non-positive volume Jacobian ({jacobian:e}) at (theta, phi) = ({theta:.4}, {phi:.4})")]
    DegenerateCell { jacobian: f64, theta: f64, phi: f64 },

    #[error("harmonic period matrix is singular (|det| = {det:e})")]
    SingularPeriodMatrix { det: f64 },

    #[error("surface Poisson solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    PoissonNoConvergence { residual: f64, iterations: usize },

    #[error("non-finite kernel value between nodes {row} and {col}")]
    AssemblyFailure { row: usize, col: usize },

    #[error("density is not mean-zero: mean {mean:e}, norm {norm:e}")]
    NotMeanZero { mean: f64, norm: f64 },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error(
        "contraction estimate did not settle: successive ratios differ by {spread:e} after {iterations} iterations"
    )]
    NoConvergence { spread: f64, iterations: usize },

    #[error("evaluation point lies on the filament (distance {distance:e})")]
    OnFilament { distance: f64 },

    #[error("filament comes within {distance:e} of the domain (required > {required:e})")]
    FilamentIntersectsDomain { distance: f64, required: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
