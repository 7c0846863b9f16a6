use std::path::PathBuf;

use thiserror::Error;

use crate::annotation::LabelError;
use crate::cwt::CwtError;
use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::render::RenderError;
use crate::report::ReportError;
use crate::segment::SegmentError;
use crate::signal::SignalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure raised by the pipeline, grouped by stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Cwt(#[from] CwtError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
