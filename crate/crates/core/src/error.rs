use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Attach a location (block index, branch name, tensor name) to an error.
pub trait ResultExt<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::Context {
            context: ctx(),
            source: Box::new(e),
        })
    }
}

/// Failures while decoding a config document or weight container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected \"HPIW\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("file truncated while reading {what}")]
    Truncated { what: String },
    #[error("payloads of tensors `{first}` and `{second}` overlap")]
    OverlappingOffsets { first: String, second: String },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("unknown dtype code {code} for tensor `{name}`")]
    UnknownDtype { name: String, code: u8 },
    #[error("payload of tensor `{name}` starts inside the header (offset {offset})")]
    OffsetInHeader { name: String, offset: u64 },
    #[error("{0} trailing bytes after the last payload")]
    TrailingBytes(u64),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    #[error("tensor `{name}` has dims {found:?}, expected {expected:?}")]
    DimsMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor `{name}` is {found}, expected {expected} (conversion not requested)")]
    DtypeMismatch {
        name: String,
        found: &'static str,
        expected: &'static str,
    },
    #[error("invalid config document: {0}")]
    Config(String),
}
