use std::path::Path;

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, flags or input data (exit code 2).
    #[error("{0}")]
    Validation(String),
    /// Everything else: I/O, divergence, degenerate geometry (exit code 3).
    #[error("{0}")]
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error on {}: {e}", path.display()))
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<geneoh::Error> for CliError {
    fn from(e: geneoh::Error) -> Self {
        use geneoh::Error as E;
        match e {
            E::InvalidInput(_)
            | E::Shape { .. }
            | E::InsufficientFrames { .. }
            | E::InvalidShape(_)
            | E::Unsupported(_)
            | E::TimestepOutOfRange { .. }
            | E::Format { .. } => CliError::Validation(e.to_string()),
            E::Generation(_) | E::FittingDiverged { .. } | E::Degenerate(_) | E::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let v: CliError = geneoh::Error::InvalidInput("x".into()).into();
        assert_eq!(v.exit_code(), 2);
        let r: CliError = geneoh::Error::Degenerate("x".into()).into();
        assert_eq!(r.exit_code(), 3);
        assert_eq!(r.context("clip 3").to_string(), "clip 3: degenerate geometry: x");
    }
}
