//! MCU-side roles: image pre-processing, classifier/detector post-processing,
//! bus and system accounting, and the flows the command-line tool drives.

mod image;
pub mod pipeline;
mod post;
mod system;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compiler::CompileError;
use crate::ir::IrError;
use crate::isa::IsaError;
use crate::oracle::OracleError;
use crate::sim::SimError;

pub use image::{preprocess, Normalize, RgbImage, MAX_SIDE};
pub use post::{fc_head, nms, topk, DetBox, FcWeights, DEFAULT_CLASSES, DEFAULT_FEATURES};
pub use system::{fps_bound, system_report, BusKind, BusSpec, SystemProfile, SystemReport};

#[derive(Debug, Error)]
pub enum HostError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ppm: {0}")]
    Ppm(String),
    #[error("image {width}x{height} exceeds 256x256")]
    Oversize { width: usize, height: usize },
    #[error("{what} has {got} elements, expected {want}")]
    DimMismatch { what: &'static str, got: usize, want: usize },
    #[error("invalid box {0}")]
    BadBox(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl HostError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HostError::Io { path: path.to_path_buf(), source }
    }
}
