use thiserror::Error;

pub type Result<T> = std::result::Result<T, QmaError>;

#[derive(Debug, Error)]
pub enum QmaError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("not a metric form: induced Hermitian form has min eigenvalue {0:.3e}")]
    NotMetricForm(f64),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("jet arithmetic: {0}")]
    Jet(String),
    #[error("chart inversion failed after {iterations} iterations (residual {residual:.3e})")]
    ChartInversion { iterations: usize, residual: f64 },
    #[error("left the q-positive cone: min eigenvalue {0:.3e}")]
    ConeExit(f64),
    #[error("positivity cone exit: damping underflow at step {step:.3e} (min eigenvalue {min_eig:.3e})")]
    DampingUnderflow { step: f64, min_eig: f64 },
    #[error("newton did not converge at t = {t}: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { t: f64, residual: f64, iterations: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
