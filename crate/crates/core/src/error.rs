use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Invariant(String),

    #[error("frequency {freq_hz} Hz lies outside the source range [{lo}, {hi}] Hz")]
    Extrapolation { freq_hz: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("closed-loop denominator is near singular at {freq_hz} Hz")]
    SingularDenominator { freq_hz: f64 },

    #[error("winding number undefined: {0}")]
    Winding(String),

    #[error("missing weight curve for {0}")]
    MissingWeight(String),

    #[error("{0}")]
    Infeasible(InfeasibleInfo),

    #[error("conic solver stopped with status {status:?} ({context})")]
    Solver {
        status: crate::conic::SolveStatus,
        context: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Location of the constraint that carries the most weight in a primal
/// infeasibility certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleInfo {
    pub iteration: usize,
    pub plant: String,
    pub config: String,
    pub channel: String,
    pub freq_hz: f64,
}

impl std::fmt::Display for InfeasibleInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.iteration == 0 {
            write!(f, "weights unachievable at this controller order")?;
        } else {
            write!(f, "synthesis iteration {} is infeasible", self.iteration)?;
        }
        write!(
            f,
            "; most violated constraint: plant {} config {} channel {} at {:.3} Hz",
            self.plant, self.config, self.channel, self.freq_hz
        )
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
