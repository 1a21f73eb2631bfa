use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit. Variants are grouped by the module that
/// produces them; the CLI maps every variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples: {malformed} malformed line(s), zero well-formed")]
    NoSamples { malformed: usize },

    #[error("failed to start sampler command `{command}`: {source}")]
    SamplerSpawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("replay file not found: {0}")]
    ReplayMissing(PathBuf),

    #[error("sampler already stopped")]
    AlreadyStopped,

    #[error("invalid sampler configuration: {0}")]
    SamplerConfig(String),

    #[error("out of memory at batch size {batch_size}")]
    OutOfMemory { batch_size: u32 },

    #[error("workload failure: {0}")]
    WorkloadFailure(String),

    #[error("workload protocol error: {0}")]
    Protocol(String),

    #[error("model does not fit: no feasible batch size")]
    ModelDoesNotFit,

    #[error("GPU `{gpu}` is locked by another sweep ({path})")]
    GpuBusy { gpu: String, path: PathBuf },

    #[error("insufficient samples in window: {found} sample(s), need at least 2")]
    InsufficientSamples { found: usize },

    #[error("empty run: no batch marks")]
    EmptyRun,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("frontier fit failed: {0}")]
    FitFailed(String),

    #[error("setup `{0}` has no peak compute rating")]
    MissingPeakCompute(String),

    #[error("all models filtered out")]
    AllFiltered,

    #[error("duplicate record key {0}")]
    DuplicateKey(String),

    #[error("unsupported store version: found `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
