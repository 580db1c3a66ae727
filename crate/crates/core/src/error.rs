use std::fmt;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid hyperparameters or model configuration.
    Config(String),
    /// Tensor shapes that cannot be combined.
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A caller broke an operation's precondition.
    Contract(String),
    /// An id or index outside its table, with the offending position.
    Input { position: usize, message: String },
    /// Built sequence cannot fit in the allowed length.
    InputTooLong { needed: usize, max_len: usize },
    /// Token id that the tokenizer cannot decode.
    Decode { position: usize, id: u32 },
    /// Dataset content problems (pool too small, corpus too short).
    Data(String),
    /// Malformed dataset or checkpoint file, with the line when known.
    Parse { line: Option<usize>, message: String },
    /// Checkpoint integrity or compatibility failure.
    Checkpoint(String),
    /// Training produced a NaN or infinite value.
    NonFinite { step: usize, what: String },
    /// Beam search ran out of admissible expansions.
    DecodeExhausted,
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Dimension { op, lhs, rhs } => {
                write!(f, "dimension error in {op}: {lhs:?} vs {rhs:?}")
            }
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Input { position, message } => {
                write!(f, "input error at position {position}: {message}")
            }
            Error::InputTooLong { needed, max_len } => {
                write!(f, "input too long: needs {needed} tokens, limit is {max_len}")
            }
            Error::Decode { position, id } => {
                write!(f, "cannot decode token id {id} at position {position}")
            }
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Parse { line: Some(l), message } => write!(f, "parse error on line {l}: {message}"),
            Error::Parse { line: None, message } => write!(f, "parse error: {message}"),
            Error::Checkpoint(m) => write!(f, "checkpoint error: {m}"),
            Error::NonFinite { step, what } => {
                write!(f, "non-finite {what} at step {step}; training aborted")
            }
            Error::DecodeExhausted => write!(f, "decoding exhausted: every expansion was filtered"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
