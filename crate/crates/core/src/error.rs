use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| exceeds tolerance")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label {label} at sample {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("RBF bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("cannot split {samples} samples across {clients} non-empty clients")]
    TooManyClients { clients: usize, samples: usize },

    #[error("invalid partition manifest: {0}")]
    InvalidManifest(String),

    #[error("client pool exhausted: every client has already been sampled")]
    PoolExhausted,

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("temperature grid is empty")]
    EmptyGrid,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("file length mismatch (truncated?): expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest encoding: {0}")]
    ManifestFormat(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn mismatch(
        op: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors raised while decoding or reading files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::BadMagic { .. }
                | Error::VersionUnsupported(_)
                | Error::TruncatedFile { .. }
                | Error::InvalidManifest(_)
                | Error::ManifestFormat(_)
        )
    }

    /// True for failures of the numerical kernels.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotSymmetric { .. }
                | Error::NonFinite { .. }
        )
    }
}
