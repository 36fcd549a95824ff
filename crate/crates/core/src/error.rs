use thiserror::Error;

/// Errors raised by configuration checks, the virtual fabric and the strategies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("deadlock: {}", describe_blocked(.blocked))]
    Deadlock {
        /// `(rank, awaited source)` for every rank stuck in a receive.
        blocked: Vec<(usize, usize)>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("accounting error at rank {rank}: {message}")]
    Accounting { rank: usize, message: String },

    #[error("infeasible: rank {rank} needs {requested} floats resident, cap is {cap}")]
    Infeasible { rank: usize, requested: u64, cap: u64 },

    #[error("synchronization fault at sample {sample}: partial counts sum to {count}, expected {expected}")]
    SynchronizationFault { sample: usize, count: u64, expected: u64 },

    #[error("io error: {0}")]
    Io(String),
}

fn describe_blocked(blocked: &[(usize, usize)]) -> String {
    blocked
        .iter()
        .map(|(rank, src)| format!("rank {rank} waiting on rank {src}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
