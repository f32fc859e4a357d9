//! Face detection with a Haar cascade over integral images and person
//! detection with HOG descriptors scored by a linear SVM.

use std::path::PathBuf;

use thiserror::Error;

pub mod bolts;
pub mod cascade;
pub mod hog;
pub mod integral;
pub mod model_io;
pub mod nms;
pub mod scan;
pub mod synthetic;

pub use bolts::{FaceBolt, PersonBolt, FACES_STREAM, PERSONS_STREAM};
pub use cascade::{detect_multiscale_cascade, HaarCascade, HaarRect, Stage, WeakClassifier, FACE_LABEL};
pub use hog::{detect_multiscale_hog, hog_descriptor, HogModel, DESCRIPTOR_LEN, PERSON_LABEL};
pub use integral::IntegralImage;
pub use model_io::{load_cascade, load_hog, parse_cascade, parse_hog, write_cascade, write_hog};
pub use nms::{nms, Detection};
pub use scan::{ScanParams, Size};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("window must be 64x128, got {width}x{height}")]
    BadWindowSize { width: u32, height: u32 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid scan parameters: {0}")]
    BadParams(&'static str),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read {}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
}
