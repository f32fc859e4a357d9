//! The surveillance topology: fetcher → background subtraction → face and
//! person detection → labeller → export, with the video exporter following
//! the fetcher's progress notices.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::annotate::{LabellerBolt, LabellerConfig, LABELLED_STREAM};
use crate::bgsub::{BgSubBolt, BgSubConfig, DETECT_STREAM, ELIGIBLE_STREAM};
use crate::detect::{FaceBolt, HaarCascade, HogModel, PersonBolt, ScanParams, FACES_STREAM, PERSONS_STREAM};
use crate::ingest::{FetcherConfig, FetcherSpout, FRAMES_STREAM, PROGRESS_STREAM};
use crate::runtime::{Component, Grouping, StreamDecl, Topology, TopologyError, TopologySpec};
use crate::sink::{ChunkerConfig, ExportBolt, SinkConfig, VideoExportBolt};

pub const FETCHER: &str = "fetcher";
pub const BGSUB: &str = "bgsub";
pub const FACE_DETECT: &str = "faceDetect";
pub const PERSON_DETECT: &str = "personDetect";
pub const LABELLER: &str = "labeller";
pub const EXPORT: &str = "export";
pub const VIDEO_EXPORT: &str = "videoExport";

/// Nodes whose parallelism follows the worker count. The fetcher and the
/// video exporter always run as a single instance.
pub const SCALABLE_NODES: [&str; 5] = [BGSUB, FACE_DETECT, PERSON_DETECT, LABELLER, EXPORT];

const FRAME_FIELDS: [&str; 3] = ["streamId", "seq", "frameKey"];

/// Parallelism of each scalable node: `workers` unless overridden.
pub fn parallelism(workers: usize, overrides: &BTreeMap<String, usize>) -> BTreeMap<String, usize> {
    SCALABLE_NODES.iter().map(|n| (n.to_string(), overrides.get(*n).copied().unwrap_or(workers))).collect()
}

pub fn surveillance_topology(
    parallelism: &BTreeMap<String, usize>,
    message_timeout_ms: u64,
    queue_capacity: usize,
) -> Result<Topology, TopologyError> {
    let p = |node: &str| parallelism.get(node).copied().unwrap_or(1);
    let frames = |name: &str| StreamDecl::new(name, &FRAME_FIELDS);
    let mut spec = TopologySpec::new()
        .spout(FETCHER, 1, vec![frames(FRAMES_STREAM), StreamDecl::new(PROGRESS_STREAM, &["streamId", "through", "end"])])
        .bolt(BGSUB, p(BGSUB), vec![frames(ELIGIBLE_STREAM), frames(DETECT_STREAM)])
        .bolt(FACE_DETECT, p(FACE_DETECT), vec![frames(FACES_STREAM)])
        .bolt(PERSON_DETECT, p(PERSON_DETECT), vec![frames(PERSONS_STREAM)])
        .bolt(LABELLER, p(LABELLER), vec![frames(LABELLED_STREAM)])
        .bolt(EXPORT, p(EXPORT), vec![])
        .bolt(VIDEO_EXPORT, 1, vec![])
        .edge(FETCHER, FRAMES_STREAM, BGSUB, Grouping::Fields("streamId".into()))
        .edge(BGSUB, DETECT_STREAM, FACE_DETECT, Grouping::Shuffle)
        .edge(BGSUB, DETECT_STREAM, PERSON_DETECT, Grouping::Shuffle)
        .edge(FACE_DETECT, FACES_STREAM, LABELLER, Grouping::Fields("streamId".into()))
        .edge(PERSON_DETECT, PERSONS_STREAM, LABELLER, Grouping::Fields("streamId".into()))
        .edge(BGSUB, ELIGIBLE_STREAM, EXPORT, Grouping::Fields("frameKey".into()))
        .edge(LABELLER, LABELLED_STREAM, EXPORT, Grouping::Fields("frameKey".into()))
        .edge(FETCHER, PROGRESS_STREAM, VIDEO_EXPORT, Grouping::Shuffle);
    spec.message_timeout_ms = message_timeout_ms;
    spec.queue_capacity = queue_capacity;
    Topology::build(spec)
}

/// Everything the components need, already validated and loaded.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub fetcher: FetcherConfig,
    pub bgsub: BgSubConfig,
    pub cascade: Arc<HaarCascade>,
    pub face_scan: ScanParams,
    pub person_model: Arc<HogModel>,
    pub person_scan: ScanParams,
    pub labeller: LabellerConfig,
    pub sink: SinkConfig,
    pub chunker: ChunkerConfig,
}

pub fn surveillance_components(s: &PipelineSettings) -> HashMap<String, Component> {
    let mut c = HashMap::new();
    let fetcher = s.fetcher.clone();
    c.insert(FETCHER.to_string(), Component::spout(move |_| FetcherSpout::new(fetcher.clone())));
    let bgsub = s.bgsub.clone();
    c.insert(BGSUB.to_string(), Component::bolt(move |_| BgSubBolt::new(bgsub.clone())));
    let (cascade, face_scan) = (s.cascade.clone(), s.face_scan);
    c.insert(FACE_DETECT.to_string(), Component::bolt(move |_| FaceBolt::new(cascade.clone(), face_scan)));
    let (model, person_scan) = (s.person_model.clone(), s.person_scan);
    c.insert(PERSON_DETECT.to_string(), Component::bolt(move |_| PersonBolt::new(model.clone(), person_scan)));
    let labeller = s.labeller.clone();
    c.insert(LABELLER.to_string(), Component::bolt(move |_| LabellerBolt::new(labeller.clone())));
    let sink = s.sink.clone();
    c.insert(EXPORT.to_string(), Component::bolt(move |_| ExportBolt::new(sink.clone())));
    let (sink, chunker) = (s.sink.clone(), s.chunker.clone());
    c.insert(
        VIDEO_EXPORT.to_string(),
        Component::bolt(move |_| VideoExportBolt::new(sink.clone(), chunker.clone())),
    );
    c
}
