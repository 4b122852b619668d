use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// Malformed JSON, with the position serde reported.
    #[error("{}:{line}:{column}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: owis_core::error::Error },
    #[error(transparent)]
    Core(#[from] owis_core::error::Error),
    /// Checkpoint incompatible with the data or arguments it is used with.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }

    fn core(&self) -> Option<&owis_core::error::Error> {
        match self {
            Error::Core(e) | Error::InFile { source: e, .. } => Some(e),
            Error::Stage { source, .. } => source.core(),
            _ => None,
        }
    }

    /// Process exit code: 3 for numeric failures, 2 for bad input of any
    /// kind, 1 for everything else (I/O).
    pub fn exit_code(&self) -> i32 {
        use owis_core::error::Error as E;
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Parse { .. } | Error::Checkpoint(_) => 2,
            _ => match self.core() {
                Some(E::Numeric(_)) => 3,
                Some(_) => 2,
                None => 1,
            },
        }
    }
}
