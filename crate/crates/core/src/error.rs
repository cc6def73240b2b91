use std::path::PathBuf;

use crate::geom::Pose;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("failed to parse OBJ line {line}: {message}")]
    ObjParse { line: usize, message: String },
    #[error("nothing was rendered: object is behind the camera or outside the frustum")]
    EmptyRender,
    #[error("mask is empty")]
    EmptyMask,
    #[error("no positive depth inside the mask")]
    NoValidDepth,
    #[error("a model vertex projects from behind the camera")]
    VertexBehindCamera,
    #[error("search did not converge; final interval [{low}, {high}]")]
    NoConvergence { best: Box<Pose>, low: f64, high: f64 },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveDepth(_) => "NonPositiveDepth",
            Error::InvalidCamera(_) => "InvalidCamera",
            Error::InvalidMesh(_) => "InvalidMesh",
            Error::ObjParse { .. } => "ObjParse",
            Error::EmptyRender => "EmptyRender",
            Error::EmptyMask => "EmptyMask",
            Error::NoValidDepth => "NoValidDepth",
            Error::VertexBehindCamera => "VertexBehindCamera",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::EmptyInput(_) => "EmptyInput",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::AtFrame { source, .. } => source.kind(),
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::AtFrame { frame, source: Box::new(self) }
    }
}
