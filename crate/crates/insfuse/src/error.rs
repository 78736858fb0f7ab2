use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("line {line}, field {field}: {message}")]
    Parse {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: insfuse_core::Error,
    },
    #[error(transparent)]
    Core(#[from] insfuse_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}{}: {source}", topic.as_deref().map(|t| format!(", topic {t}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        topic: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, field: &'static str, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(
        stage: &'static str,
        topic: Option<&str>,
        source: impl Into<Error>,
    ) -> Self {
        Error::Stage {
            stage,
            topic: topic.map(String::from),
            source: Box::new(source.into()),
        }
    }
}
