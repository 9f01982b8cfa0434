use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZrpError {
    #[error("series for the critical measure diverges for b = {0} (need b > 2)")]
    DivergentSeries(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state {0} is impossible: zero canonical weight")]
    ImpossibleState(String),

    #[error("budget exceeded: {needed} entries requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("state space is disconnected: {0}")]
    Disconnected(String),

    #[error("chain is not reversible: residual {residual:.3e} on edge ({i}, {j})")]
    NotReversible { i: usize, j: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("coupling order violated at t = {time}: {state}")]
    CouplingViolation { time: f64, state: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ZrpError>;
