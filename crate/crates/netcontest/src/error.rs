use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("convergence error: residual {residual:.3e} after {iterations} iterations")]
    Convergence { residual: f64, iterations: usize },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("boundary: {0}")]
    Boundary(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("control error: {0}")]
    Control(String),
    #[error("certificate error: {0}")]
    Certificate(String),
    #[error("search exhausted: {0}")]
    SearchExhausted(String),
    #[error("hypothesis error: {0}")]
    Hypothesis(String),
    #[error("degenerate budget: {0}")]
    DegenerateBudget(String),
    #[error("beta too small: minimum admissible beta is {0}")]
    BetaTooSmall(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
