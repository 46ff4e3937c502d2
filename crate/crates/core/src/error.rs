use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("conjugate symmetry violated: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    Symmetry { defect: f64, tolerance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dyadic index {j} outside resolvable range [{min}, {max}]")]
    DyadicRange { j: i32, min: i32, max: i32 },

    #[error("initial data: {0}")]
    InitialData(String),

    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value in {field} at t = {time}")]
    NonFinite { field: &'static str, time: f64 },

    #[error("density minimum {min:e} below floor {floor:e}")]
    DensityBelowFloor { min: f64, floor: f64 },

    #[error("velocity history: {0}")]
    History(String),

    #[error("config line {line}: {message}")]
    Config {
        line: usize,
        key: Option<String>,
        message: String,
    },

    #[error("ledger: {0}")]
    Ledger(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("degenerate inequality: right-hand side vanishes")]
    Degenerate,

    #[error("fit: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short identifier, used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "grid",
            Error::Shape(_) => "shape",
            Error::Symmetry { .. } => "symmetry",
            Error::InvalidArgument(_) => "argument",
            Error::DyadicRange { .. } => "dyadic_range",
            Error::InitialData(_) => "initial_data",
            Error::Cfl { .. } => "cfl",
            Error::NonFinite { .. } => "non_finite",
            Error::DensityBelowFloor { .. } => "density_floor",
            Error::History(_) => "history",
            Error::Config { .. } => "config",
            Error::Ledger(_) => "ledger",
            Error::Checkpoint(_) => "checkpoint",
            Error::Degenerate => "degenerate",
            Error::Fit(_) => "fit",
            Error::Io(_) => "io",
        }
    }
}
