use thiserror::Error;

/// Everything that can go wrong while configuring or running a simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("conflicting configuration: {0}")]
    Conflict(String),

    #[error(
        "k-grid too coarse: recurrence time {recurrence:.4} does not exceed t_end {t_end:.4}; \
         need at least {required_modes} modes at this bandwidth"
    )]
    GridTooCoarse {
        recurrence: f64,
        t_end: f64,
        required_modes: usize,
    },

    #[error("state with {modes} modes needs {required_bytes} bytes, budget is {budget_bytes}")]
    MemoryBudget {
        modes: usize,
        required_bytes: usize,
        budget_bytes: usize,
    },

    #[error("integration diverged at t = {t} (dt = {dt})")]
    Diverged { t: f64, dt: f64 },

    #[error("step size {dt} exceeds the stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("reduced density matrix has zero trace")]
    DegenerateState,

    #[error("eigenvalue iteration did not converge for matrix {0}")]
    EigenNoConvergence(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the `fbqed` binary: 1 for configuration
    /// problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. }
            | Error::DegenerateState
            | Error::EigenNoConvergence(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
