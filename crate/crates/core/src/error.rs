use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite values at t = {t}: blow-up suspected")]
    NonFinite { t: f64 },

    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("unknown initial profile kind `{0}`")]
    UnknownProfile(String),

    #[error("Jacobian y_xi = {value} below floor at label {label}")]
    SingularJacobian { label: usize, value: f64 },

    #[error("flow map lost monotonicity at t = {t} (label {label}, y_xi = {value})")]
    DiffeomorphismLoss { t: f64, label: usize, value: f64 },

    #[error("Riccati bound undefined: m0 = {m0} must exceed sqrt(2) B = {threshold}")]
    UndefinedBound { m0: f64, threshold: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
