use std::path::PathBuf;

/// Errors of the std layer. IO and configuration problems exit with status
/// 2, numerical failures with status 1.
#[derive(Debug, thiserror::Error)]
pub enum MsgpError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input data: {0}")]
    Data(String),
    #[error(transparent)]
    Numerical(#[from] msgp_core::Error),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<MsgpError>,
    },
}

pub type Result<T> = std::result::Result<T, MsgpError>;

impl MsgpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MsgpError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        MsgpError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        MsgpError::Data(msg.into())
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Self {
        match self {
            e @ MsgpError::Stage { .. } => e,
            e => MsgpError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            MsgpError::Io { .. } | MsgpError::Config(_) | MsgpError::Data(_) => 2,
            MsgpError::Numerical(_) => 1,
            MsgpError::Stage { source, .. } => source.exit_code(),
        }
    }
}

/// Attaches a stage tag to any result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<MsgpError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().at(stage))
    }
}
