use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use thiserror::Error;

use vigil_core::pipeline::{parallelism, surveillance_components, surveillance_topology, FETCHER};
use vigil_core::runtime::{run, FaultPlan, RunError, RunOptions, RunReport, StopCondition, TopologyError};
use vigil_core::sink::chunker::read_ledger;
use vigil_core::sink::{
    format_percent, reduction_stats, unpack_chunk, Category, ChunkError, SinkConfig, SinkError, StatsError, LEDGER_FILE,
};

use crate::config::{ConfigError, PipelineConfig};

pub const REPORT_FILE: &str = "run.report";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: invalid topology: {source}", config.display())]
    Topology { config: PathBuf, source: TopologyError },
    #[error("output: {0}")]
    Sink(#[from] SinkError),
    #[error("run failed: {0}")]
    Run(#[from] RunError),
    #[error("no completed run found in {}", .0.display())]
    NoRunFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Chunk { path: PathBuf, source: ChunkError },
    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    /// 1 for configuration and usage problems, 2 for failures while running
    /// or reading results.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Topology { .. } | CliError::NoRunFound(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub dry_run: bool,
    /// Virtual clock and fixed seed.
    pub deterministic: bool,
    pub seed: Option<u64>,
    /// Overrides `runtime.workerCount`.
    pub workers: Option<usize>,
    /// Fraction of deliveries to drop on purpose (fault testing).
    pub drop_rate: f64,
}

#[derive(Debug)]
pub enum RunOutcome {
    DryRun { edge_list: String },
    Completed { report: RunReport, out_root: PathBuf },
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome, CliError> {
    cmd_run_with_stop(args, StopCondition::drain())
}

pub fn cmd_run_with_stop(args: &RunArgs, stop: StopCondition) -> Result<RunOutcome, CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(w) = args.workers {
        cfg.runtime.worker_count = w;
    }
    if !(0.0..1.0).contains(&args.drop_rate) {
        return Err(CliError::Config(ConfigError::Invalid {
            path: args.config.clone(),
            key: "--drop-rate".into(),
            reason: "must be in [0, 1)".into(),
        }));
    }
    if args.deterministic && cfg.source.frame_interval_ms == 0 {
        // paced emission gives every frame a reproducible virtual timestamp
        cfg.source.frame_interval_ms = 1;
    }
    let settings = cfg.settings(&args.config)?;
    let par = parallelism(cfg.runtime.worker_count, &cfg.runtime.parallelism);
    let topology = surveillance_topology(&par, cfg.runtime.message_timeout_ms, cfg.runtime.queue_capacity)
        .map_err(|source| CliError::Topology { config: args.config.clone(), source })?;
    if args.dry_run {
        return Ok(RunOutcome::DryRun { edge_list: topology.edge_list() });
    }
    settings.sink.create_folders()?;
    let components = surveillance_components(&settings);
    let options = RunOptions {
        seed: args.seed.unwrap_or(0),
        virtual_clock: args.deterministic,
        faults: FaultPlan::none().with_drop_rate(args.drop_rate),
        ..RunOptions::default()
    };
    let report = run(&topology, &components, &stop, &options)?;
    let out_root = settings.sink.out_root.clone();
    let report_path = out_root.join(REPORT_FILE);
    std::fs::write(&report_path, report.to_text())
        .map_err(|e| CliError::Io { path: report_path, reason: e.to_string() })?;
    Ok(RunOutcome::Completed { report, out_root })
}

/// Runs until the source is exhausted or Ctrl-C is pressed.
pub fn cmd_run_interruptible(args: &RunArgs) -> Result<RunOutcome, CliError> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler_flag = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || handler_flag.store(true, std::sync::atomic::Ordering::SeqCst)) {
        log::warn!("cannot install Ctrl-C handler: {e}");
    }
    cmd_run_with_stop(args, StopCondition::with_kill(flag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub total_frames: u64,
    pub eligible: u64,
    pub faces: u64,
    pub persons: u64,
    pub chunks: u64,
    pub reduction_percent: f64,
}

impl StatsReport {
    pub fn to_text(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Video | No. of frames | Kept frames | Faces | Persons | Chunks | % Reduction |");
        let _ = writeln!(out, "|-------|---------------|-------------|-------|---------|--------|-------------|");
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {} | {} | {} | {} |",
            self.total_frames,
            self.eligible,
            self.faces,
            self.persons,
            self.chunks,
            format_percent(self.reduction_percent)
        );
        let _ = writeln!(out, "reduction: {}", format_percent(self.reduction_percent));
        out
    }
}

fn count_frame_files(dir: &Path) -> Result<u64, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), reason: e.to_string() })?;
    let mut n = 0;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io { path: dir.to_path_buf(), reason: e.to_string() })?;
        if entry.file_name().to_str().and_then(vigil_core::sink::parse_frame_file_name).is_some() {
            n += 1;
        }
    }
    Ok(n)
}

pub fn cmd_stats(out_root: &Path) -> Result<StatsReport, CliError> {
    let report_path = out_root.join(REPORT_FILE);
    let text = std::fs::read_to_string(&report_path).map_err(|_| CliError::NoRunFound(out_root.to_path_buf()))?;
    let report = RunReport::parse_text(&text).ok_or_else(|| CliError::NoRunFound(out_root.to_path_buf()))?;
    let sink = SinkConfig::new(out_root);
    let total_frames = report.metric(&format!("{FETCHER}.frames"));
    let eligible = count_frame_files(&sink.folder(Category::Eligible))?;
    let faces = count_frame_files(&sink.folder(Category::Face))?;
    let persons = count_frame_files(&sink.folder(Category::Person))?;
    let mut chunks = 0;
    let videos = sink.videos();
    if let Ok(dirs) = std::fs::read_dir(&videos) {
        for dir in dirs.flatten() {
            chunks += read_ledger(&dir.path().join(LEDGER_FILE))?.len() as u64;
        }
    }
    let reduction_percent = reduction_stats(total_frames, eligible)?;
    Ok(StatsReport { total_frames, eligible, faces, persons, chunks, reduction_percent })
}

/// Header, one `seq timestampMs` line per frame, and the CRC verdict.
pub fn cmd_inspect_chunk(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io { path: path.to_path_buf(), reason: e.to_string() })?;
    let chunk = unpack_chunk(&bytes).map_err(|source| CliError::Chunk { path: path.to_path_buf(), source })?;
    let mut out = String::new();
    let _ = writeln!(out, "magic: FVC1");
    let _ = writeln!(out, "frames: {}", chunk.frames.len());
    let _ = writeln!(out, "fps: {}", chunk.fps);
    let _ = writeln!(out, "size: {}x{}x{}", chunk.width, chunk.height, chunk.channels);
    for f in &chunk.frames {
        let _ = writeln!(out, "{} {}", f.sequence_nr, f.timestamp_ms);
    }
    let _ = writeln!(out, "CRC OK");
    Ok(out)
}
