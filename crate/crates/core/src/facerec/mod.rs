//! Face recognition service: eigenface training, distance-from-face-space
//! detection and nearest-class labeling.

mod detect;
mod gallery;
mod jacobi;
mod model;
pub mod synth;

pub use detect::{detect, recognize_frame, DetectParams, Detection, FaceBox, RecognitionResult};
pub use gallery::{read_gallery, write_gallery, StorageReport};
pub use jacobi::{symmetric_eigen, SymmetricEigen};
pub use model::{Classification, FaceModel, GalleryImage};

use thiserror::Error;

use crate::image::ImageError;

/// Display name for a face that matched no identity.
pub const UNKNOWN_LABEL: &str = "UNKNOWN";

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("gallery too small: {0}")]
    GalleryTooSmall(String),
    #[error("dimension mismatch: expected {}x{}, found {}x{}", expected.0, expected.1, found.0, found.1)]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("gallery has no variance; every image is identical")]
    InsufficientVariance,
    #[error("eigensolver did not converge in {0} sweeps")]
    EigenNoConvergence(usize),
    #[error("frame {frame_w}x{frame_h} is smaller than the {win_w}x{win_h} detection window")]
    FrameTooSmall {
        frame_w: usize,
        frame_h: usize,
        win_w: usize,
        win_h: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad model file: {0}")]
    ModelFormat(String),
    #[error("gallery: {0}")]
    Gallery(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
