use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("scenario failed validation: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("hypothesis already terminated")]
    Terminated,

    #[error("window [{start:.3}, {end:.3}] outside script of duration {total:.3} s")]
    WindowOutsideScript { start: f64, end: f64, total: f64 },

    #[error("window of {0:.3} s exceeds the 30 s model input limit")]
    WindowTooLong(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("controller in {actual:?} mode, expected {expected:?}")]
    WrongMode {
        expected: crate::decoder::PruneMode,
        actual: crate::decoder::PruneMode,
    },

    #[error("negative latency {latency_ms:.3} ms for word '{word}'")]
    NegativeLatency { word: String, latency_ms: f64 },

    #[error("pipeline deadlock: {0}")]
    Deadlock(String),

    #[error("{0} cores is too few for profiling (need at least 7)")]
    TooFewCores(usize),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}
