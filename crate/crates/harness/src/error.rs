use std::io;
use std::path::PathBuf;

use meshslam::{EvalError, MeshError, ProjectionError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },
    #[error("config key `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("benchmark: {0}")]
    Benchmark(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("websocket: {0}")]
    WebSocket(Box<tungstenite::Error>),
}

impl From<tungstenite::Error> for HarnessError {
    fn from(e: tungstenite::Error) -> Self {
        HarnessError::WebSocket(Box::new(e))
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
