//! Frame ingestion: the fetcher spout reading a directory of numbered
//! PGM/PPM files or a pipe of `FRM1` records.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{read_frame, Frame, FrameError};
use crate::netpbm::decode_pnm;
use crate::runtime::{Spout, SpoutEmission, SpoutError, SpoutPoll};
use crate::transport::{frame_payload, Progress};

pub const FRAMES_STREAM: &str = "frames";
pub const PROGRESS_STREAM: &str = "progress";
pub const DEFAULT_PENDING_CAPACITY: usize = 64;

/// Message ids of progress tuples have this bit set so they never collide
/// with frame sequence numbers.
const PROGRESS_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SourceKind {
    Directory,
    RawPipe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FetcherConfig {
    pub source_kind: SourceKind,
    pub path: PathBuf,
    pub frame_interval_ms: u64,
    /// Emit every (frameSkip+1)-th source frame.
    pub frame_skip: u64,
    pub stream_id: String,
    pub pending_capacity: usize,
}

impl Default for FetcherConfig {
    fn default() -> Self {
        FetcherConfig {
            source_kind: SourceKind::Directory,
            path: PathBuf::from("frames"),
            frame_interval_ms: 0,
            frame_skip: 0,
            stream_id: "cam1".to_string(),
            pending_capacity: DEFAULT_PENDING_CAPACITY,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("source path {0} does not exist")]
    SourceMissing(PathBuf),
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("source gone: {0}")]
    SourceGone(String),
    #[error("pending buffer full ({0} frames)")]
    PendingBufferFull(usize),
    #[error("message {0} is already pending")]
    AlreadyPending(u64),
    #[error("invalid fetcher setting: {0}")]
    BadConfig(&'static str),
}

impl FetcherConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.stream_id.is_empty() {
            return Err(IngestError::BadConfig("streamId must be nonempty"));
        }
        if self.pending_capacity == 0 {
            return Err(IngestError::BadConfig("pendingCapacity must be positive"));
        }
        if !self.path.exists() {
            return Err(IngestError::SourceMissing(self.path.clone()));
        }
        Ok(())
    }
}

/// Index encoded in a `frame_%06d.pgm` / `frame_%06d.ppm` file name.
pub fn parse_frame_index(name: &str) -> Option<u64> {
    let stem = name.strip_prefix("frame_")?;
    let digits = stem.strip_suffix(".pgm").or_else(|| stem.strip_suffix(".ppm"))?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Frame files of a directory in ascending numeric order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io = |e: std::io::Error| IngestError::Io { path: dir.to_path_buf(), reason: e.to_string() };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        let name = entry.file_name();
        if let Some(index) = name.to_str().and_then(parse_frame_index) {
            files.push((index, entry.path()));
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

enum Source {
    Directory { files: Vec<PathBuf>, next: usize },
    Pipe { reader: BufReader<File>, done: bool },
}

/// Reads frames from a source, applying frame skipping and assigning
/// gap-free sequence numbers.
pub struct Fetcher {
    stream_id: String,
    frame_skip: u64,
    source: Source,
    raw_index: u64,
    next_seq: u64,
    decode_errors: u64,
    skipped: u64,
}

impl Fetcher {
    pub fn open(cfg: &FetcherConfig) -> Result<Self, IngestError> {
        cfg.validate()?;
        let source = match cfg.source_kind {
            SourceKind::Directory => Source::Directory { files: list_frame_files(&cfg.path)?, next: 0 },
            SourceKind::RawPipe => {
                let file = File::open(&cfg.path)
                    .map_err(|e| IngestError::Io { path: cfg.path.clone(), reason: e.to_string() })?;
                Source::Pipe { reader: BufReader::new(file), done: false }
            }
        };
        Ok(Fetcher {
            stream_id: cfg.stream_id.clone(),
            frame_skip: cfg.frame_skip,
            source,
            raw_index: 0,
            next_seq: 0,
            decode_errors: 0,
            skipped: 0,
        })
    }

    /// Next frame, or `None` at end of stream. Corrupt inputs are skipped
    /// and counted. Directory frames are stamped with `timestamp_ms`; pipe
    /// records keep their own timestamps.
    pub fn fetch_next(&mut self, timestamp_ms: i64) -> Result<Option<Frame>, IngestError> {
        loop {
            let Some(raw) = self.next_raw(timestamp_ms)? else { return Ok(None) };
            let index = self.raw_index;
            self.raw_index += 1;
            if index % (self.frame_skip + 1) != 0 {
                self.skipped += 1;
                continue;
            }
            let Some(mut frame) = raw.load(&self.stream_id) else {
                self.decode_errors += 1;
                continue;
            };
            frame.sequence_nr = self.next_seq;
            self.next_seq += 1;
            return Ok(Some(frame));
        }
    }

    fn next_raw(&mut self, timestamp_ms: i64) -> Result<Option<RawItem>, IngestError> {
        match &mut self.source {
            Source::Directory { files, next } => {
                let Some(path) = files.get(*next).cloned() else { return Ok(None) };
                *next += 1;
                Ok(Some(RawItem::File { path, timestamp_ms }))
            }
            Source::Pipe { reader, done } => {
                if *done {
                    return Ok(None);
                }
                match read_frame(reader) {
                    Ok(Some(frame)) => Ok(Some(RawItem::Record(Ok(frame)))),
                    Ok(None) => {
                        *done = true;
                        Ok(None)
                    }
                    Err(FrameError::Truncated) => {
                        warn!("pipe ended inside a frame record");
                        *done = true;
                        Ok(None)
                    }
                    Err(e @ (FrameError::InvariantViolation(_) | FrameError::InvalidUtf8(_))) => {
                        Ok(Some(RawItem::Record(Err(e))))
                    }
                    Err(e) => Err(IngestError::SourceGone(e.to_string())),
                }
            }
        }
    }

    /// Sequence numbers assigned so far.
    pub fn emitted(&self) -> u64 {
        self.next_seq
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }

    /// Source frames passed over because of `frameSkip`.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }
}

enum RawItem {
    File { path: PathBuf, timestamp_ms: i64 },
    Record(Result<Frame, FrameError>),
}

impl RawItem {
    fn load(self, stream_id: &str) -> Option<Frame> {
        match self {
            RawItem::File { path, timestamp_ms } => {
                let decoded = std::fs::read(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|bytes| decode_pnm(&bytes).map_err(|e| e.to_string()))
                    .and_then(|img| {
                        Frame::new(stream_id, 0, timestamp_ms, img.width, img.height, img.channels, img.pixels)
                            .map_err(|e| e.to_string())
                    });
                decoded.map_err(|e| warn!("skipping {}: {e}", path.display())).ok()
            }
            RawItem::Record(Ok(mut frame)) => {
                frame.stream_id = stream_id.to_string();
                Some(frame)
            }
            RawItem::Record(Err(e)) => {
                warn!("skipping corrupt pipe record: {e}");
                None
            }
        }
    }
}

/// Emitted messages retained for replay until their trees settle.
#[derive(Debug, Clone)]
pub struct PendingBuffer {
    capacity: usize,
    entries: BTreeMap<u64, SpoutEmission>,
}

impl PendingBuffer {
    pub fn new(capacity: usize) -> Self {
        PendingBuffer { capacity, entries: BTreeMap::new() }
    }

    pub fn hold(&mut self, emission: SpoutEmission) -> Result<(), IngestError> {
        if self.is_full() {
            return Err(IngestError::PendingBufferFull(self.capacity));
        }
        if self.entries.contains_key(&emission.msg_id) {
            return Err(IngestError::AlreadyPending(emission.msg_id));
        }
        self.entries.insert(emission.msg_id, emission);
        Ok(())
    }

    pub fn release(&mut self, msg_id: u64) -> Option<SpoutEmission> {
        self.entries.remove(&msg_id)
    }

    pub fn get(&self, msg_id: u64) -> Option<&SpoutEmission> {
        self.entries.get(&msg_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// The fetcher spout. Emits frames on [`FRAMES_STREAM`] (message id =
/// sequence number) and settlement progress on [`PROGRESS_STREAM`].
pub struct FetcherSpout {
    cfg: FetcherConfig,
    fetcher: Option<Fetcher>,
    pending: PendingBuffer,
    settled: BTreeSet<u64>,
    watermark: u64,
    progress: BTreeMap<u64, SpoutEmission>,
    progress_dirty: bool,
    next_progress_id: u64,
    ended: bool,
    end_announced: bool,
    next_emit_at: u64,
    failed_frames: u64,
}

impl FetcherSpout {
    pub fn new(cfg: FetcherConfig) -> Self {
        let capacity = cfg.pending_capacity;
        FetcherSpout {
            cfg,
            fetcher: None,
            pending: PendingBuffer::new(capacity),
            settled: BTreeSet::new(),
            watermark: 0,
            progress: BTreeMap::new(),
            progress_dirty: false,
            next_progress_id: 0,
            ended: false,
            end_announced: false,
            next_emit_at: 0,
            failed_frames: 0,
        }
    }

    pub fn pending(&self) -> &PendingBuffer {
        &self.pending
    }

    fn settle(&mut self, seq: u64) {
        self.settled.insert(seq);
        while self.settled.remove(&self.watermark) {
            self.watermark += 1;
            self.progress_dirty = true;
        }
        if self.ended && self.pending.is_empty() && !self.end_announced {
            self.progress_dirty = true;
        }
    }

    fn progress_emission(&mut self) -> SpoutEmission {
        let end = self.ended && self.pending.is_empty();
        self.end_announced |= end;
        self.progress_dirty = false;
        let msg_id = PROGRESS_BIT | self.next_progress_id;
        self.next_progress_id += 1;
        let e = SpoutEmission {
            msg_id,
            stream: PROGRESS_STREAM.to_string(),
            payload: Progress { through: self.watermark, end }.to_payload(&self.cfg.stream_id),
        };
        self.progress.insert(msg_id, e.clone());
        e
    }
}

impl Spout for FetcherSpout {
    fn next_tuple(&mut self, now_ms: u64, wall_ms: i64) -> Result<SpoutPoll, SpoutError> {
        if self.progress_dirty {
            return Ok(SpoutPoll::Emit(self.progress_emission()));
        }
        if self.ended {
            return Ok(SpoutPoll::Exhausted);
        }
        if self.pending.is_full() || now_ms < self.next_emit_at {
            return Ok(SpoutPoll::Idle);
        }
        if self.fetcher.is_none() {
            let fetcher = Fetcher::open(&self.cfg).map_err(|e| SpoutError::SourceGone(e.to_string()))?;
            self.fetcher = Some(fetcher);
        }
        let fetcher = self.fetcher.as_mut().expect("opened above");
        match fetcher.fetch_next(wall_ms).map_err(|e| SpoutError::SourceGone(e.to_string()))? {
            Some(frame) => {
                let payload = frame_payload(&frame).map_err(|e| SpoutError::Other(e.to_string()))?;
                let e = SpoutEmission { msg_id: frame.sequence_nr, stream: FRAMES_STREAM.to_string(), payload };
                self.pending.hold(e.clone()).map_err(|e| SpoutError::Other(e.to_string()))?;
                self.next_emit_at = now_ms + self.cfg.frame_interval_ms;
                Ok(SpoutPoll::Emit(e))
            }
            None => {
                self.ended = true;
                if self.pending.is_empty() {
                    return Ok(SpoutPoll::Emit(self.progress_emission()));
                }
                Ok(SpoutPoll::Exhausted)
            }
        }
    }

    fn ack(&mut self, msg_id: u64) {
        if msg_id & PROGRESS_BIT != 0 {
            self.progress.remove(&msg_id);
        } else if self.pending.release(msg_id).is_some() {
            self.settle(msg_id);
        }
    }

    fn replay(&mut self, msg_id: u64) -> Option<SpoutEmission> {
        if msg_id & PROGRESS_BIT != 0 {
            return self.progress.get(&msg_id).cloned();
        }
        self.pending.get(msg_id).cloned()
    }

    fn fail(&mut self, msg_id: u64) {
        if msg_id & PROGRESS_BIT != 0 {
            self.progress.remove(&msg_id);
        } else if self.pending.release(msg_id).is_some() {
            warn!("frame {msg_id} of {} given up after replays", self.cfg.stream_id);
            self.failed_frames += 1;
            self.settle(msg_id);
        }
    }

    fn next_wakeup(&self) -> Option<u64> {
        (!self.ended && !self.pending.is_full() && self.cfg.frame_interval_ms > 0).then_some(self.next_emit_at)
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        let (frames, decode_errors, skipped) =
            self.fetcher.as_ref().map_or((0, 0, 0), |f| (f.emitted(), f.decode_errors(), f.skipped()));
        vec![
            ("frames".to_string(), frames),
            ("decode_errors".to_string(), decode_errors),
            ("skipped".to_string(), skipped),
            ("failed_frames".to_string(), self.failed_frames),
        ]
    }
}
