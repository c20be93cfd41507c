use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the modelling, scheduling and rendering layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The optical configuration has no finite solution (e.g. the tunable lens
    /// images the pupil onto the object point).
    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("cannot blur at any distance with ETL power {power_diopters} D")]
    CannotBlur { power_diopters: f64 },

    #[error("target range [{low_diopters}, {high_diopters}] D is not achievable by any stored waveform")]
    RangeUnachievable {
        low_diopters: f64,
        high_diopters: f64,
    },

    #[error(
        "window too narrow: no projector frame can be centred where the power stays within \
         {tol_diopters} D of {target_diopters} D; increase the tolerance or use a staircase drive"
    )]
    WindowTooNarrow {
        target_diopters: f64,
        tol_diopters: f64,
    },

    #[error("nothing to blur: the scene has no blur-labelled region")]
    NothingToBlur,

    #[error("unresolved mask id `{0}`")]
    UnresolvedMask(String),

    #[error("PSF kernel of {kernel_px} px does not fit a {width}x{height} image; pad the scene")]
    KernelTooLarge {
        kernel_px: usize,
        width: usize,
        height: usize,
    },

    #[error("detection error: {0}")]
    Detection(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from the optical model rather than from
    /// malformed input or IO.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Singular(_)
                | Error::CannotBlur { .. }
                | Error::RangeUnachievable { .. }
                | Error::WindowTooNarrow { .. }
                | Error::NothingToBlur
                | Error::KernelTooLarge { .. }
                | Error::Detection(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
