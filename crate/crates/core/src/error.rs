use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value {value} for `{name}`")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("smoothing windows around t={first} and t={second} overlap")]
    OverlappingWindows { first: f64, second: f64 },
    #[error("linear system is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("ground-state iteration did not converge within {iterations} steps")]
    NonConvergence { iterations: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("wavefunctions live on different grids")]
    GridMismatch,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
