use thiserror::Error;

/// Errors produced by the analytic and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge: estimated error {error:.3e} after {subdivisions} subdivisions")]
    QuadratureNotConverged { error: f64, subdivisions: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("queue is unstable: utilization {rho:.6} >= 1")]
    UnstableQueue { rho: f64 },

    #[error("no alpha in the search box satisfies the constraints (min outage {min_p_out:.6}, limit {epsilon:.6})")]
    CellInfeasible { min_p_out: f64, epsilon: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulated queue exceeded {limit} jobs at t={time:.6}s ({jobs_done} jobs served); the policy is likely unstable")]
    QueueExplosion {
        limit: usize,
        time: f64,
        jobs_done: u64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
