use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A resource guard tripped (graph too large, enumeration infeasible, ...).
    #[error("size limit exceeded: {0}")]
    Size(String),

    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parity error: n*d = {n}*{d} is odd")]
    Parity { n: usize, d: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised by resource guards rather than bad input.
    pub fn is_resource_guard(&self) -> bool {
        matches!(self, Error::Size(_) | Error::Generation(_))
    }
}
