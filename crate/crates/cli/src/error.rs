use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] perc_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for bad configuration or parameters, 3 when a resource guard trips,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use perc_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_resource_guard() => 3,
            CliError::Core(E::Domain(_) | E::Parity { .. } | E::Parse { .. } | E::InvalidGraph(_)) => 2,
            _ => 1,
        }
    }
}
