use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::model::Frame;
use crate::netpbm::{decode_pnm, FrameMeta};
use crate::runtime::{Bolt, BoltError, Collector, TupleEnvelope};
use crate::transport::Progress;

use super::chunk::pack_chunk;
use super::writer::parse_frame_file_name;
use super::{Category, SinkConfig, SinkError};

pub const LEDGER_FILE: &str = "chunks.ledger";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ChunkerConfig {
    pub frame_rate_fps: f64,
    pub desired_video_length_s: f64,
    pub poll_interval_ms: u64,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig { frame_rate_fps: 25.0, desired_video_length_s: 10.0, poll_interval_ms: 500 }
    }
}

impl ChunkerConfig {
    /// Frames per chunk: `round(fps · length)`.
    pub fn frames_per_chunk(&self) -> Result<usize, SinkError> {
        if !(self.frame_rate_fps > 0.0 && self.frame_rate_fps.is_finite()) {
            return Err(SinkError::BadConfig("chunker.frameRateFps must be positive"));
        }
        if !(self.desired_video_length_s > 0.0 && self.desired_video_length_s.is_finite()) {
            return Err(SinkError::BadConfig("chunker.desiredVideoLengthS must be positive"));
        }
        if self.poll_interval_ms == 0 {
            return Err(SinkError::BadConfig("chunker.pollIntervalMs must be positive"));
        }
        let n = (self.frame_rate_fps * self.desired_video_length_s).round();
        if n < 1.0 {
            return Err(SinkError::BadConfig("chunker settings give fewer than one frame per chunk"));
        }
        Ok(n as usize)
    }
}

/// One line of `chunks.ledger`: `firstSeq lastSeq chunkFile`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub first: u64,
    pub last: u64,
    pub file: String,
}

impl LedgerEntry {
    pub fn parse(line: &str) -> Option<LedgerEntry> {
        let mut parts = line.split_whitespace();
        let entry = LedgerEntry {
            first: parts.next()?.parse().ok()?,
            last: parts.next()?.parse().ok()?,
            file: parts.next()?.to_string(),
        };
        (parts.next().is_none() && entry.first <= entry.last).then_some(entry)
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, SinkError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(SinkError::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LedgerEntry::parse(l).ok_or(SinkError::BadLedger { path: path.to_path_buf(), line: i + 1 }))
        .collect()
}

pub fn chunk_file_name(first: u64, last: u64) -> String {
    format!("chunk_{first}_{last}.fvc")
}

#[derive(Debug, Default)]
struct StreamState {
    /// Highest sequence number already packed.
    packed_through: Option<u64>,
    entries: Vec<LedgerEntry>,
}

/// Packs the eligible folder into fixed-size chunks. Chunks and the ledger
/// of each stream live in `Videos/<streamId>/`; the ledger is read back on
/// open so a restarted chunker continues where the last one stopped.
pub struct Chunker {
    sink: SinkConfig,
    fps: f64,
    per_chunk: usize,
    streams: BTreeMap<String, StreamState>,
    unreadable: BTreeSet<PathBuf>,
    chunks_written: u64,
}

impl Chunker {
    pub fn open(sink: &SinkConfig, cfg: &ChunkerConfig) -> Result<Self, SinkError> {
        let per_chunk = cfg.frames_per_chunk()?;
        let mut streams = BTreeMap::new();
        let videos = sink.videos();
        if videos.is_dir() {
            for entry in fs::read_dir(&videos).map_err(|e| SinkError::io(&videos, e))? {
                let entry = entry.map_err(|e| SinkError::io(&videos, e))?;
                let ledger = entry.path().join(LEDGER_FILE);
                if !ledger.is_file() {
                    continue;
                }
                let entries = read_ledger(&ledger)?;
                let packed_through = entries.iter().map(|e| e.last).max();
                streams.insert(entry.file_name().to_string_lossy().into_owned(), StreamState { packed_through, entries });
            }
        }
        Ok(Chunker {
            sink: sink.clone(),
            fps: cfg.frame_rate_fps,
            per_chunk,
            streams,
            unreadable: BTreeSet::new(),
            chunks_written: 0,
        })
    }

    pub fn frames_per_chunk(&self) -> usize {
        self.per_chunk
    }

    pub fn chunks_written(&self) -> u64 {
        self.chunks_written
    }

    /// Eligible files that could not be packed (unreadable or with a
    /// geometry different from the rest of their chunk).
    pub fn skipped_files(&self) -> u64 {
        self.unreadable.len() as u64
    }

    pub fn ledger(&self, stream: &str) -> &[LedgerEntry] {
        self.streams.get(stream).map_or(&[], |s| &s.entries)
    }

    /// Unpacked eligible files of each stream, in sequence order.
    fn candidates(&self) -> Result<BTreeMap<String, Vec<(u64, PathBuf)>>, SinkError> {
        let dir = self.sink.folder(Category::Eligible);
        let mut out: BTreeMap<String, Vec<(u64, PathBuf)>> = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| SinkError::io(&dir, e))? {
            let entry = entry.map_err(|e| SinkError::io(&dir, e))?;
            let name = entry.file_name();
            let Some((stream, seq)) = name.to_str().and_then(parse_frame_file_name) else { continue };
            let path = entry.path();
            let packed = self.streams.get(stream).and_then(|s| s.packed_through);
            if packed.is_some_and(|p| seq <= p) || self.unreadable.contains(&path) {
                continue;
            }
            out.entry(stream.to_string()).or_default().push((seq, path));
        }
        for files in out.values_mut() {
            files.sort();
        }
        Ok(out)
    }

    /// Packs every full chunk available. With `limits`, only the listed
    /// streams are considered and only frames below their limit; `None`
    /// means every stream, unlimited. With `flush`, leftovers go into a
    /// final short chunk.
    pub fn poll(&mut self, limits: Option<&BTreeMap<String, u64>>, flush: bool) -> Result<Vec<PathBuf>, SinkError> {
        let mut written = Vec::new();
        for (stream, files) in self.candidates()? {
            let limit = match limits {
                Some(l) => match l.get(&stream) {
                    Some(&through) => through,
                    None => continue,
                },
                None => u64::MAX,
            };
            let mut ready: Vec<(u64, PathBuf)> = files.into_iter().filter(|(seq, _)| *seq < limit).collect();
            while ready.len() >= self.per_chunk || (flush && !ready.is_empty()) {
                match self.pack_next(&stream, &mut ready, flush)? {
                    Some(path) => written.push(path),
                    None => break,
                }
            }
        }
        Ok(written)
    }

    /// Loads frames from the front of `ready` until a chunk is full, skipping
    /// unreadable files. Returns `None` (leaving `ready` untouched apart from
    /// dropped unreadable files) if too few good frames remain.
    fn pack_next(&mut self, stream: &str, ready: &mut Vec<(u64, PathBuf)>, flush: bool) -> Result<Option<PathBuf>, SinkError> {
        let mut frames: Vec<Frame> = Vec::with_capacity(self.per_chunk);
        let mut used = 0;
        let mut bad = Vec::new();
        for (i, (_, path)) in ready.iter().enumerate() {
            if frames.len() == self.per_chunk {
                break;
            }
            used = i + 1;
            match load_eligible(path) {
                Ok(frame) => {
                    if frames.first().is_some_and(|f| (f.width, f.height, f.channels) != (frame.width, frame.height, frame.channels)) {
                        warn!("{}: dimensions differ from the rest of the chunk, skipped", path.display());
                        bad.push(path.clone());
                    } else {
                        frames.push(frame);
                    }
                }
                Err(reason) => {
                    warn!("{}: {reason}, skipped", path.display());
                    bad.push(path.clone());
                }
            }
        }
        self.unreadable.extend(bad.iter().cloned());
        if frames.len() < self.per_chunk && !flush {
            ready.retain(|(_, p)| !bad.contains(p));
            return Ok(None);
        }
        ready.drain(..used);
        let (Some(first), Some(last)) = (frames.first(), frames.last()) else { return Ok(None) };
        let (first, last) = (first.sequence_nr, last.sequence_nr);
        let path = self.write_chunk(stream, first, last, &frames)?;
        Ok(Some(path))
    }

    fn write_chunk(&mut self, stream: &str, first: u64, last: u64, frames: &[Frame]) -> Result<PathBuf, SinkError> {
        let dir = self.sink.videos().join(stream);
        fs::create_dir_all(&dir).map_err(|e| SinkError::io(&dir, e))?;
        let name = chunk_file_name(first, last);
        let path = dir.join(&name);
        let bytes = pack_chunk(frames, self.fps).map_err(|source| SinkError::Chunk { path: path.clone(), source })?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| SinkError::io(&dir, e))?;
        tmp.write_all(&bytes).map_err(|e| SinkError::io(&path, e))?;
        tmp.as_file().sync_data().map_err(|e| SinkError::io(&path, e))?;
        tmp.persist(&path).map_err(|e| SinkError::io(&path, e.error))?;

        let entry = LedgerEntry { first, last, file: name };
        let ledger = dir.join(LEDGER_FILE);
        let mut file = OpenOptions::new().create(true).append(true).open(&ledger).map_err(|e| SinkError::io(&ledger, e))?;
        writeln!(file, "{} {} {}", entry.first, entry.last, entry.file).map_err(|e| SinkError::io(&ledger, e))?;
        file.sync_data().map_err(|e| SinkError::io(&ledger, e))?;

        let state = self.streams.entry(stream.to_string()).or_default();
        state.packed_through = Some(last);
        state.entries.push(entry);
        self.chunks_written += 1;
        log::info!("packed {} frames into {}", frames.len(), path.display());
        Ok(path)
    }
}

/// Rebuilds a frame from an eligible PPM and its identity comment.
pub fn load_eligible(path: &Path) -> Result<Frame, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    let img = decode_pnm(&bytes).map_err(|e| e.to_string())?;
    let meta = FrameMeta::find(&img.comments).ok_or("missing frame identity comment")?;
    Frame::new(meta.stream_id, meta.sequence_nr, meta.timestamp_ms, img.width, img.height, img.channels, img.pixels)
        .map_err(|e| e.to_string())
}

/// The video export bolt. It listens to the fetcher's progress notices and
/// polls the eligible folder, packing only frames below each stream's
/// settled watermark so a chunk never misses a frame that is still in
/// flight. The final notice (and shutdown) flush the remainder.
pub struct VideoExportBolt {
    sink: SinkConfig,
    cfg: ChunkerConfig,
    chunker: Option<Chunker>,
    watermarks: BTreeMap<String, u64>,
    last_poll: Option<u64>,
}

impl VideoExportBolt {
    pub fn new(sink: SinkConfig, cfg: ChunkerConfig) -> Self {
        VideoExportBolt { sink, cfg, chunker: None, watermarks: BTreeMap::new(), last_poll: None }
    }

    fn chunker(&mut self) -> Result<&mut Chunker, BoltError> {
        if self.chunker.is_none() {
            let c = Chunker::open(&self.sink, &self.cfg).map_err(|e| BoltError::Fatal(e.to_string()))?;
            self.chunker = Some(c);
        }
        Ok(self.chunker.as_mut().expect("opened above"))
    }

    fn poll(&mut self, now: u64, flush: bool) -> Result<(), BoltError> {
        self.last_poll = Some(now);
        let limits = self.watermarks.clone();
        self.chunker()?.poll(Some(&limits), flush).map_err(|e| BoltError::Fatal(e.to_string()))?;
        Ok(())
    }

    fn poll_due(&self, now: u64) -> bool {
        self.last_poll.is_none_or(|t| now >= t + self.cfg.poll_interval_ms)
    }
}

impl Bolt for VideoExportBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let (Some(progress), Some(stream)) = (Progress::from_payload(&input.payload), input.payload.field("streamId"))
        else {
            out.report_error("malformed progress notice");
            out.ack(&input);
            return Ok(());
        };
        let mark = self.watermarks.entry(stream.to_string()).or_insert(0);
        *mark = (*mark).max(progress.through);
        let now = out.now_ms();
        if progress.end {
            self.poll(now, true)?;
        } else if self.poll_due(now) {
            self.poll(now, false)?;
        }
        out.ack(&input);
        Ok(())
    }

    fn tick(&mut self, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let now = out.now_ms();
        if !self.watermarks.is_empty() && self.poll_due(now) {
            self.poll(now, false)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), BoltError> {
        // every tree has settled by now, so whatever is in the folder is final
        let chunker = self.chunker()?;
        chunker.poll(None, true).map_err(|e| BoltError::Fatal(e.to_string()))?;
        Ok(())
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        let (chunks, skipped) = self.chunker.as_ref().map_or((0, 0), |c| (c.chunks_written(), c.skipped_files()));
        vec![("chunks".to_string(), chunks), ("skipped_files".to_string(), skipped)]
    }
}
