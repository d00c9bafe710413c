use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Genome bytes fail the arity-consistency scan or contain unknown opcodes.
    MalformedGenome(String),
    /// Index outside the genome.
    Bounds { index: usize, len: usize },
    /// Random tree construction could not fit the size budget.
    InitFailure(String),
    /// Buffer pool has no free slot.
    PoolExhausted { capacity: usize },
    /// Buffer handle misuse (double release, use after release).
    Accounting(String),
    /// Splice result would exceed max_tree_size.
    SpliceOverflow { need: usize, max: usize },
    /// Invalid run configuration.
    Config(String),
    /// Evaluation stack would exceed the configured depth estimate.
    StackBound { need: usize, max: usize },
    Io(std::io::Error),
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedGenome(msg) => write!(f, "malformed genome: {msg}"),
            Error::Bounds { index, len } => write!(f, "index {index} out of bounds for genome of {len} nodes"),
            Error::InitFailure(msg) => write!(f, "tree construction failed: {msg}"),
            Error::PoolExhausted { capacity } => write!(f, "buffer pool exhausted (capacity {capacity})"),
            Error::Accounting(msg) => write!(f, "buffer accounting error: {msg}"),
            Error::SpliceOverflow { need, max } => write!(f, "spliced child needs {need} nodes, max is {max}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::StackBound { need, max } => write!(f, "evaluation stack needs depth {need}, estimate allows {max}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
