use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("magnetization out of domain: |m| = {0} >= 1")]
    OutOfDomain(f64),

    #[error("negative tilt {0} passed to bessel_ratio; use oddness externally")]
    NegativeTilt(f64),

    #[error("no transverse minimizer: eps = {eps} >= rho_beta = {rho}")]
    Infeasible { eps: f64, rho: f64 },

    #[error("fixed-point iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("flow left the preserved set E at step {step}: {reason}")]
    PreservedSetViolated { step: usize, reason: String },

    #[error("profile boundary collar missing or too narrow: need {need} cells, have {have}")]
    MissingCollar { need: usize, have: usize },

    #[error("kernel span too coarse: L/cell = {ratio:.2} < 4")]
    KernelTooCoarse { ratio: f64 },

    #[error("time step {0} outside (0, 1]")]
    BadTimeStep(f64),

    #[error("decay profile requires a stationary input (residual {0:.3e})")]
    NotStationary(f64),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no accepted samples; increase n_samples or delta")]
    NoAcceptedSamples,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
