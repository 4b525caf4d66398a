use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("angular index ({s}, {t}) outside the {num_s}x{num_t} view grid")]
    AngularIndex {
        s: usize,
        t: usize,
        num_s: usize,
        num_t: usize,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large to materialize: {0}")]
    TooLarge(String),

    #[error("missing dataset `{key}` in {}", path.display())]
    MissingDataset { key: String, path: PathBuf },

    #[error("value out of range in `{key}`: {detail}")]
    ValueRange { key: String, detail: String },

    #[error("non-finite loss at step {step}: {snapshot}")]
    NonFiniteLoss { step: u64, snapshot: String },

    #[error("{what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("hdf5 error in {}: {source}", path.display())]
    Hdf5 {
        path: PathBuf,
        #[source]
        source: hdf5_metno::Error,
    },

    #[error("image error in {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn hdf5(path: impl Into<PathBuf>, source: hdf5_metno::Error) -> Self {
        Error::Hdf5 {
            path: path.into(),
            source,
        }
    }
}
