use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("length mismatch: expected {expected} rows, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("row {row}: {msg}")]
    InvalidSeries { row: usize, msg: String },
    #[error("task {id}: {msg}")]
    InvalidTask { id: usize, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("negative input: {0}")]
    NegativeInput(&'static str),
    #[error("slot {t}, group {group}: infeasible allocation ({msg})")]
    InfeasibleAllocation { t: usize, group: usize, msg: String },
    #[error("dispatch {p_d} outside band [{p_check}, {p_hat}]")]
    OutsideBand { p_d: f64, p_check: f64, p_hat: f64 },
    #[error("empty band: lower {p_check} exceeds upper {p_hat}")]
    EmptyBand { p_check: f64, p_hat: f64 },
    #[error("carbon footprint {c} left [0, {quota}] at slot {t}")]
    QuotaViolation { t: usize, c: f64, quota: f64 },
    #[error("quota precondition violated: {0}")]
    Precondition(String),
    #[error("mismatched horizons: {0} vs {1}")]
    MismatchedHorizon(usize, usize),
    #[error("linear program: {0}")]
    Lp(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
