use std::io::{self, Write};
use std::path::PathBuf;

use tempfile::NamedTempFile;

use crate::model::Frame;
use crate::netpbm::frame_to_ppm;

use super::{SinkConfig, SinkError, ELIGIBLE_DIR, FACES_DIR, PERSONS_DIR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Eligible,
    Face,
    Person,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Eligible, Category::Face, Category::Person];

    pub fn folder(self) -> &'static str {
        match self {
            Category::Eligible => ELIGIBLE_DIR,
            Category::Face => FACES_DIR,
            Category::Person => PERSONS_DIR,
        }
    }
}

/// `<streamId>_<seq, 10 digits>.ppm`; zero padding keeps name order equal to
/// sequence order.
pub fn frame_file_name(stream_id: &str, seq: u64) -> String {
    format!("{stream_id}_{seq:010}.ppm")
}

pub fn parse_frame_file_name(name: &str) -> Option<(&str, u64)> {
    let (stream, seq) = name.strip_suffix(".ppm")?.rsplit_once('_')?;
    if stream.is_empty() || seq.len() < 10 || !seq.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((stream, seq.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WriteOutcome {
    Written(PathBuf),
    /// A file for this frame and category already exists; it was left alone.
    Deduped(PathBuf),
}

impl WriteOutcome {
    pub fn path(&self) -> &PathBuf {
        match self {
            WriteOutcome::Written(p) | WriteOutcome::Deduped(p) => p,
        }
    }
}

/// Writes frames as PPM files. Each file is written to a temporary name in
/// the target folder and linked into place only if the final name is still
/// free, so concurrent or repeated deliveries of a frame leave exactly one
/// complete file.
#[derive(Debug, Clone)]
pub struct FrameWriter {
    cfg: SinkConfig,
}

impl FrameWriter {
    pub fn new(cfg: SinkConfig) -> Self {
        FrameWriter { cfg }
    }

    pub fn config(&self) -> &SinkConfig {
        &self.cfg
    }

    pub fn write_frame(&self, frame: &Frame, category: Category) -> Result<WriteOutcome, SinkError> {
        let dir = self.cfg.folder(category);
        let path = dir.join(frame_file_name(&frame.stream_id, frame.sequence_nr));
        if path.exists() {
            return Ok(WriteOutcome::Deduped(path));
        }
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| SinkError::io(&dir, e))?;
        tmp.write_all(&frame_to_ppm(frame)).map_err(|e| SinkError::io(tmp.path(), e))?;
        tmp.as_file().sync_data().map_err(|e| SinkError::io(tmp.path(), e))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(WriteOutcome::Written(path)),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(WriteOutcome::Deduped(path)),
            Err(e) => Err(SinkError::io(&path, e.error)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_sort_numerically() {
        assert_eq!(frame_file_name("cam1", 5), "cam1_0000000005.ppm");
        assert_eq!(parse_frame_file_name("cam_a_0000000042.ppm"), Some(("cam_a", 42)));
        assert_eq!(parse_frame_file_name(".tmpXYZ"), None);
        assert_eq!(parse_frame_file_name("cam_12.ppm"), None);
        assert!(frame_file_name("c", 99) < frame_file_name("c", 100));
    }

    #[test]
    fn second_write_is_deduped() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SinkConfig::new(dir.path());
        cfg.create_folders().unwrap();
        let w = FrameWriter::new(cfg.clone());
        let f = Frame::new("cam1", 5, 0, 2, 1, 1, vec![1, 2]).unwrap();
        let first = w.write_frame(&f, Category::Eligible).unwrap();
        assert!(matches!(first, WriteOutcome::Written(_)));
        assert!(first.path().ends_with("EligibleFrames/cam1_0000000005.ppm"));
        assert!(matches!(w.write_frame(&f, Category::Eligible).unwrap(), WriteOutcome::Deduped(_)));
        assert_eq!(std::fs::read_dir(cfg.folder(Category::Eligible)).unwrap().count(), 1);
    }
}
