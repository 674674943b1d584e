use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty waveform")]
    EmptyWaveform,

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid STFT parameters: {0}")]
    InvalidStftParams(String),

    #[error("window/hop pair violates constant overlap-add: {0}")]
    NonCola(String),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad magic")]
    BadMagic,

    #[error("truncated payload: header declares {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },

    #[error("trailing bytes after payload: header declares {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("dimension overflow: {frames}x{bins}x{dim}")]
    DimensionOverflow { frames: u32, bins: u32, dim: u32 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },

    #[error("degenerate clustering: sampled loud bins span fewer than two clusters")]
    DegenerateClustering,

    #[error("reference signal is all zero")]
    ZeroReference,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("degenerate variance: correlation undefined")]
    DegenerateVariance,

    #[error("no trials")]
    EmptyTrials,

    #[error("oracle strategy requires reference signals")]
    MissingReferences,

    #[error("STFT parameter mismatch: {0}")]
    StftMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
