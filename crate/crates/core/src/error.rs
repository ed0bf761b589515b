use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KramersError {
    #[error("derivative order {0} is not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("oscillatory quadrature failed: {0}")]
    OscillatoryQuadratureFailure(String),

    #[error("integrand overflow: {0}")]
    Overflow(String),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("degenerate minimum: U''(z_m) = {0:e}")]
    DegenerateMinimum(f64),

    #[error("no double well: the fixed-point map has no positive root")]
    NoDoubleWell,

    #[error("fixed-point scan found {0} positive roots")]
    MultipleRoots(usize),

    #[error("degenerate metastable geometry: eta = {eta}, rho = {rho}, m* = {m_star}")]
    GeometryDegenerate { eta: f64, rho: f64, m_star: f64 },

    #[error("Poincare constant must be positive, got {0}")]
    InvalidPoincare(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("numerical blow-up at step {step}: |x| = {value:e}")]
    NumericBlowup { step: u64, value: f64 },

    #[error("all {0} trajectories timed out")]
    AllTimedOut(usize),

    #[error("invalid budget: {0}")]
    InvalidBudget(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("stage `{stage}` failed: {cause}")]
    StageFailure { stage: String, cause: String },

    #[error("i/o failure: {0}")]
    IoFailure(String),
}

pub type Result<T> = std::result::Result<T, KramersError>;

impl From<std::io::Error> for KramersError {
    fn from(e: std::io::Error) -> Self {
        KramersError::IoFailure(e.to_string())
    }
}
