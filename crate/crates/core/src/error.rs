use thiserror::Error;

use crate::feller::SolutionField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("rate integral of state {state} diverges on [{from}, {to}] (partial value {partial})")]
    Divergence {
        state: usize,
        from: f64,
        to: f64,
        partial: f64,
    },

    #[error("state {state} has zero total rate at t = {time}; no jump is possible")]
    NoJump { state: usize, time: f64 },

    #[error("time {time} lies within {epsilon} of the horizon end {end}")]
    NearHorizonEnd { time: f64, end: f64, epsilon: f64 },

    #[error("series did not converge after {terms} terms (last term mass {last_term_mass:e})")]
    NonConvergence {
        terms: usize,
        last_term_mass: f64,
        partial: Box<SolutionField>,
    },

    #[error("root finder failed to bracket E = {target} on [{lo}, {hi}]")]
    RootFinding { target: f64, lo: f64, hi: f64 },

    #[error("set is not (q,s)-bounded: q({state}, {time}) = {rate} exceeds {bound}")]
    NotBounded {
        state: usize,
        time: f64,
        rate: f64,
        bound: f64,
    },

    #[error("marginal update went negative ({value:e} at t = {time}); refine the grid")]
    Instability { time: f64, value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
