use thiserror::Error;

/// Errors produced by the geometry, ODE, stability and flow routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("coordinate singularity at r = {r}")]
    SingularPoint { r: f64 },

    #[error("graph is not space-like: max |Du|^2 = {max_grad_sq}")]
    NotSpacelike { max_grad_sq: f64 },

    #[error("internal consistency check `{check}` failed: discrepancy {discrepancy:e} exceeds bound {bound:e}")]
    InternalConsistency {
        check: &'static str,
        discrepancy: f64,
        bound: f64,
    },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("variation step too large: the family leaves the space-like cone at tau = {tau}")]
    StepTooLarge { tau: f64 },

    #[error("flow stalled at t = {t} after {rejections} consecutive rejected steps")]
    FlowStalled { t: f64, rejections: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
