use thiserror::Error;

use crate::world::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("rendering error: class {0:?} is not in the style palette")]
    Rendering(ClassId),

    #[error("fitting error: {0}")]
    Fitting(String),

    #[error("style fitting error: classes absent from samples: {0:?}")]
    MissingClasses(Vec<ClassId>),

    #[error("insertion failed after {attempts} placement attempts")]
    Insertion { attempts: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{stage} failed on {node}: {source}")]
    Stage {
        stage: String,
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: impl Into<String>, node: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            node: node.into(),
            source: Box::new(self),
        }
    }
}
