use thiserror::Error;

/// Errors raised by the numerical routines and the environment.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The requested evaluation would exceed the configured work budget.
    #[error("budget exceeded: {what} needs {needed} evaluations, limit is {limit}")]
    Budget { what: &'static str, needed: u128, limit: u128 },

    /// No power allocation satisfies both constraints.
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),

    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Which bound could not be met and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    /// Name of the violated monomial/posynomial bound.
    pub constraint: &'static str,
    /// Smallest value of the constrained quantity reachable while the other
    /// constraint holds.
    pub best_achievable: f64,
    pub limit: f64,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} bound {:.6e} cannot be met (best achievable {:.6e})",
            self.constraint, self.limit, self.best_achievable
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
