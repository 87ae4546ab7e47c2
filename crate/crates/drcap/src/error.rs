use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config {key}: {reason}")]
    Config { key: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },
    #[error("socket: {0}")]
    Socket(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] drcap_core::Error),
    #[error("negotiation did not converge in {rounds} rounds (gap {gap_norm})")]
    NotConverged { rounds: usize, gap_norm: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 for bad configuration or input values, 3 for
    /// non-convergence, 4 for file and socket trouble.
    pub fn exit_code(&self) -> i32 {
        use drcap_core::numerics::SolveStatus;
        match self {
            Error::Config { .. } => 2,
            Error::NotConverged { .. } => 3,
            Error::Core(drcap_core::Error::Solver(SolveStatus::MaxIterExceeded)) => 3,
            Error::Core(drcap_core::Error::Transport { .. }) => 4,
            Error::Core(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Socket(_) => 4,
        }
    }
}
