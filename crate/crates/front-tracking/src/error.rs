use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("vacuum formation: density {rho:e} is at or below the floor {floor:e}")]
    Vacuum { rho: f64, floor: f64 },

    #[error("root finder failed to converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("inadmissible shock orientation: {0}")]
    InadmissibleOrientation(String),

    #[error("hypothesis ({which}) violated, margin {margin:e}")]
    HypothesisViolation { which: &'static str, margin: f64 },

    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),

    /// An engine failure, located in space-time.
    #[error("event at t={t:.12e}, x={x:.12e} involving fronts {fronts:?}: {source}")]
    Event {
        t: f64,
        x: f64,
        fronts: Vec<u64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, with event locations stripped.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Event { source, .. } => source.root_cause(),
            e => e,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
