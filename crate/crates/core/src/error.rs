use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid time levels: {0}")]
    InvalidTimes(String),

    #[error("ellipticity violated at x = {point:?}, t = {time}: smallest eigenvalue {eigenvalue}")]
    EllipticityViolation {
        point: [f64; 2],
        time: f64,
        eigenvalue: f64,
    },

    #[error("coefficient evaluator returned a non-finite value at x = {point:?}, t = {time}")]
    NonFinite { point: [f64; 2], time: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular linear system at time level {level}")]
    SingularSystem { level: usize },

    #[error("t = {0} is not a time level")]
    NotATimeLevel(f64),

    #[error("forcing has zero norm: {0}")]
    ZeroForcing(String),

    #[error("delay map leaves [0, t]: tau({time}) = {tau}")]
    DelayOutOfRange { time: f64, tau: f64 },

    #[error("delay condition violated: T * sup(beta' b^-1 beta) = {value} >= 2")]
    ConditionViolation { value: f64 },

    #[error("search cap exceeded: {0}")]
    SearchCapExceeded(String),

    #[error("fixed-point iteration did not converge in {iterations} iterations (last update {last_update:e})")]
    NoConvergence { iterations: usize, last_update: f64 },

    #[error("grid too coarse: {0}")]
    UnderResolved(String),

    #[error("empty input: {0}")]
    Empty(String),
}
