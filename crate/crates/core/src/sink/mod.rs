//! Export of eligible and labelled frames to disk, chunk packing of the
//! eligible folder, and storage-reduction statistics.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod chunk;
pub mod chunker;
pub mod export;
pub mod stats;
pub mod writer;

pub use chunk::{pack_chunk, unpack_chunk, Chunk, ChunkError, CHUNK_MAGIC};
pub use chunker::{Chunker, ChunkerConfig, LedgerEntry, VideoExportBolt, LEDGER_FILE};
pub use export::ExportBolt;
pub use stats::{format_percent, reduction_stats, StatsError};
pub use writer::{frame_file_name, parse_frame_file_name, Category, FrameWriter, WriteOutcome};

pub const ELIGIBLE_DIR: &str = "EligibleFrames";
pub const FACES_DIR: &str = "Faces";
pub const PERSONS_DIR: &str = "Persons";
pub const VIDEOS_DIR: &str = "Videos";

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("disk full while writing {}", .0.display())]
    DiskFull(PathBuf),
    #[error("permission denied for {}", .0.display())]
    PermissionDenied(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: line {line}: malformed ledger entry", path.display())]
    BadLedger { path: PathBuf, line: usize },
    #[error("chunk {}: {source}", path.display())]
    Chunk { path: PathBuf, source: ChunkError },
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

impl SinkError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        match source.kind() {
            io::ErrorKind::StorageFull => SinkError::DiskFull(path.to_path_buf()),
            io::ErrorKind::PermissionDenied => SinkError::PermissionDenied(path.to_path_buf()),
            _ => SinkError::Io { path: path.to_path_buf(), source },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SinkConfig {
    pub out_root: PathBuf,
}

impl Default for SinkConfig {
    fn default() -> Self {
        SinkConfig { out_root: PathBuf::from("out") }
    }
}

impl SinkConfig {
    pub fn new(out_root: impl Into<PathBuf>) -> Self {
        SinkConfig { out_root: out_root.into() }
    }

    pub fn folder(&self, category: Category) -> PathBuf {
        self.out_root.join(category.folder())
    }

    pub fn videos(&self) -> PathBuf {
        self.out_root.join(VIDEOS_DIR)
    }

    /// Creates the output root and all category folders.
    pub fn create_folders(&self) -> Result<(), SinkError> {
        for dir in Category::ALL.iter().map(|c| self.folder(*c)).chain([self.videos()]) {
            std::fs::create_dir_all(&dir).map_err(|e| SinkError::io(&dir, e))?;
        }
        Ok(())
    }
}
