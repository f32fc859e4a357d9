//! Moving-average background subtraction with a largest-blob area gate.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, Descriptor, Feature, Frame};
use crate::runtime::{Bolt, BoltError, Collector, TupleEnvelope};
use crate::transport::{decode_input, frame_payload};

pub const ELIGIBLE_STREAM: &str = "eligible";
pub const DETECT_STREAM: &str = "detect";
pub const FOREGROUND_FEATURE: &str = "foreground";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BgError {
    #[error("frame is {got:?}, model is {want:?}")]
    DimsMismatch { got: (u32, u32), want: (u32, u32) },
    #[error("background model not initialized")]
    Uninitialized,
    #[error("expected a grayscale frame")]
    NotGrayscale,
    #[error("invalid setting: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BgSubConfig {
    pub alpha: f64,
    pub diff_threshold: u8,
    pub min_blob_ratio: f64,
    /// How long an out-of-order frame waits for a missing predecessor
    /// before the gap is skipped.
    pub reorder_timeout_ms: u64,
}

impl Default for BgSubConfig {
    fn default() -> Self {
        BgSubConfig { alpha: 0.05, diff_threshold: 25, min_blob_ratio: 0.10, reorder_timeout_ms: 30_000 }
    }
}

impl BgSubConfig {
    pub fn validate(&self) -> Result<(), BgError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(BgError::BadConfig("alpha must be in (0, 1]"));
        }
        if self.diff_threshold == 0 {
            return Err(BgError::BadConfig("diffThreshold must be in [1, 255]"));
        }
        if !(self.min_blob_ratio > 0.0 && self.min_blob_ratio < 1.0) {
            return Err(BgError::BadConfig("minBlobRatio must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn gate(&self) -> BlobGateConfig {
        BlobGateConfig { diff_threshold: self.diff_threshold, min_blob_ratio: self.min_blob_ratio }
    }
}

/// Thresholds of the foreground gate. Connectivity is always 8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobGateConfig {
    pub diff_threshold: u8,
    pub min_blob_ratio: f64,
}

/// ITU-R 601 luma, rounded. Grayscale frames are returned unchanged.
pub fn to_grayscale(frame: &Frame) -> Frame {
    if frame.channels == 1 {
        return frame.clone();
    }
    let pixels = frame
        .pixels
        .chunks_exact(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])).round() as u8)
        .collect();
    Frame { channels: 1, pixels, ..frame.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    width: u32,
    height: u32,
    alpha: f64,
    accumulator: Vec<f64>,
    initialized: bool,
}

impl BackgroundModel {
    pub fn new(width: u32, height: u32, alpha: f64) -> Self {
        BackgroundModel {
            width,
            height,
            alpha,
            accumulator: vec![0.0; width as usize * height as usize],
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn check(&self, gray: &Frame) -> Result<(), BgError> {
        if gray.channels != 1 {
            return Err(BgError::NotGrayscale);
        }
        if (gray.width, gray.height) != (self.width, self.height) {
            return Err(BgError::DimsMismatch { got: (gray.width, gray.height), want: (self.width, self.height) });
        }
        Ok(())
    }

    /// `acc = (1-alpha)·acc + alpha·gray`; the first frame is copied as is.
    pub fn accumulate_weighted(&mut self, gray: &Frame) -> Result<(), BgError> {
        self.check(gray)?;
        if !self.initialized {
            for (a, &p) in self.accumulator.iter_mut().zip(&gray.pixels) {
                *a = f64::from(p);
            }
            self.initialized = true;
            return Ok(());
        }
        let keep = 1.0 - self.alpha;
        for (a, &p) in self.accumulator.iter_mut().zip(&gray.pixels) {
            *a = keep * *a + self.alpha * f64::from(p);
        }
        Ok(())
    }

    /// Foreground mask: 255 where `|round(acc) - gray| > diffThreshold`.
    pub fn abs_diff_threshold(&self, gray: &Frame, diff_threshold: u8) -> Result<BinaryMask, BgError> {
        self.check(gray)?;
        if !self.initialized {
            return Err(BgError::Uninitialized);
        }
        let data = self
            .accumulator
            .iter()
            .zip(&gray.pixels)
            .map(|(&a, &p)| {
                let diff = (a.round() as i32 - i32::from(p)).abs();
                if diff > i32::from(diff_threshold) {
                    255
                } else {
                    0
                }
            })
            .collect();
        Ok(BinaryMask { width: self.width, height: self.height, data })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    /// 0 or 255 per pixel, row-major.
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blob {
    pub area: u64,
    pub bbox: BBox,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let up = parent[parent[x as usize] as usize];
        parent[x as usize] = up;
        x = up;
    }
    x
}

/// 8-connected components of the nonzero mask pixels, ordered by
/// (bbox.y, bbox.x). Two-pass labelling with union-find.
pub fn connected_components(mask: &BinaryMask) -> Vec<Blob> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut labels = vec![0u32; w * h];
    // label 0 = background; parent[0] unused
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if mask.data[y * w + x] == 0 {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut look = |nx: usize, ny: usize| {
                let l = labels[ny * w + nx];
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                look(x - 1, y);
            }
            if y > 0 {
                if x > 0 {
                    look(x - 1, y - 1);
                }
                look(x, y - 1);
                if x + 1 < w {
                    look(x + 1, y - 1);
                }
            }
            let label = if n == 0 {
                let fresh = parent.len() as u32;
                parent.push(fresh);
                fresh
            } else {
                let mut root = find(&mut parent, neighbours[0]);
                for &other in &neighbours[1..n] {
                    let r = find(&mut parent, other);
                    if r != root {
                        let (lo, hi) = if r < root { (r, root) } else { (root, r) };
                        parent[hi as usize] = lo;
                        root = lo;
                    }
                }
                root
            };
            labels[y * w + x] = label;
        }
    }

    struct Acc {
        area: u64,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    }
    let mut acc: HashMap<u32, Acc> = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            let a = acc.entry(root).or_insert(Acc { area: 0, x0: x, y0: y, x1: x, y1: y });
            a.area += 1;
            a.x0 = a.x0.min(x);
            a.x1 = a.x1.max(x);
            a.y1 = a.y1.max(y);
        }
    }
    let mut blobs: Vec<Blob> = acc
        .into_values()
        .map(|a| Blob {
            area: a.area,
            bbox: BBox::new(a.x0 as u32, a.y0 as u32, (a.x1 - a.x0 + 1) as u32, (a.y1 - a.y0 + 1) as u32),
        })
        .collect();
    blobs.sort_by_key(|b| (b.bbox.y, b.bbox.x, b.bbox.w, b.bbox.h, b.area));
    blobs
}

/// The largest blob if its area is strictly more than `minBlobRatio` of the
/// frame; ties go to the first blob in order.
pub fn foreground_gate(blobs: &[Blob], frame_area: u64, min_blob_ratio: f64) -> Option<Blob> {
    let mut largest: Option<Blob> = None;
    for b in blobs {
        if largest.map_or(true, |l| b.area > l.area) {
            largest = Some(*b);
        }
    }
    largest.filter(|b| b.area as f64 > min_blob_ratio * frame_area as f64)
}

/// Per-stream background state: feeds frames in order and returns the gate
/// decision (the gating blob) for each.
#[derive(Debug, Clone)]
pub struct BackgroundSubtractor {
    cfg: BgSubConfig,
    model: Option<BackgroundModel>,
}

impl BackgroundSubtractor {
    pub fn new(cfg: BgSubConfig) -> Self {
        BackgroundSubtractor { cfg, model: None }
    }

    pub fn model(&self) -> Option<&BackgroundModel> {
        self.model.as_ref()
    }

    /// Classifies `frame` against the current background, then folds it
    /// into the background. The first frame only initializes the model.
    /// A change of frame size restarts the model.
    pub fn process(&mut self, frame: &Frame) -> Option<Blob> {
        let gray = to_grayscale(frame);
        let model = match &mut self.model {
            Some(m) if m.dims() == (gray.width, gray.height) => m,
            slot => slot.insert(BackgroundModel::new(gray.width, gray.height, self.cfg.alpha)),
        };
        let decision = if model.is_initialized() {
            let mask = model.abs_diff_threshold(&gray, self.cfg.diff_threshold).expect("dims checked");
            foreground_gate(&connected_components(&mask), gray.area(), self.cfg.min_blob_ratio)
        } else {
            None
        };
        model.accumulate_weighted(&gray).expect("dims checked");
        decision
    }
}

/// Attaches the gating blob as a "foreground" feature.
pub fn tag_foreground(frame: &mut Frame, blob: &Blob) {
    frame.features.retain(|f| f.name != FOREGROUND_FEATURE);
    frame.features.push(Feature::new(
        FOREGROUND_FEATURE,
        vec![Descriptor { bbox: blob.bbox, label: FOREGROUND_FEATURE.to_string(), confidence: 1.0 }],
    ));
}

const DECISION_CACHE: usize = 8192;

struct StreamState {
    subtractor: BackgroundSubtractor,
    expected: u64,
    held: BTreeMap<u64, (TupleEnvelope, Frame)>,
    waiting_since: Option<u64>,
    decisions: BTreeMap<u64, Option<Blob>>,
}

/// The background subtraction bolt. Frames of a stream are classified in
/// sequence order whatever order they arrive in, so replays and parallel
/// upstream paths cannot change which frames pass the gate. Decisions are
/// remembered so a replayed frame gets the same answer.
pub struct BgSubBolt {
    cfg: BgSubConfig,
    streams: HashMap<String, StreamState>,
    passed: u64,
    rejected: u64,
    gaps_skipped: u64,
}

impl BgSubBolt {
    pub fn new(cfg: BgSubConfig) -> Self {
        BgSubBolt { cfg, streams: HashMap::new(), passed: 0, rejected: 0, gaps_skipped: 0 }
    }

    fn emit_decision(
        out: &mut Collector<'_>,
        input: &TupleEnvelope,
        mut frame: Frame,
        decision: Option<Blob>,
    ) -> Result<(), BoltError> {
        if let Some(blob) = decision {
            tag_foreground(&mut frame, &blob);
            let payload = frame_payload(&frame).map_err(|e| BoltError::Fatal(e.to_string()))?;
            out.emit(ELIGIBLE_STREAM, payload.clone(), &[input])?;
            out.emit(DETECT_STREAM, payload, &[input])?;
        }
        out.ack(input);
        Ok(())
    }

    fn drain(&mut self, stream: &str, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let state = self.streams.get_mut(stream).expect("stream state exists");
        while let Some((input, frame)) = state.held.remove(&state.expected) {
            let decision = state.subtractor.process(&frame);
            if decision.is_some() {
                self.passed += 1;
            } else {
                self.rejected += 1;
            }
            state.decisions.insert(state.expected, decision);
            while state.decisions.len() > DECISION_CACHE {
                state.decisions.pop_first();
            }
            state.expected += 1;
            Self::emit_decision(out, &input, frame, decision)?;
        }
        state.waiting_since = if state.held.is_empty() { None } else { state.waiting_since.or(Some(out.now_ms())) };
        Ok(())
    }
}

impl Bolt for BgSubBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let Some(frame) = decode_input(&input, out) else { return Ok(()) };
        let cfg = &self.cfg;
        let state = self.streams.entry(frame.stream_id.clone()).or_insert_with(|| StreamState {
            subtractor: BackgroundSubtractor::new(cfg.clone()),
            expected: 0,
            held: BTreeMap::new(),
            waiting_since: None,
            decisions: BTreeMap::new(),
        });
        let seq = frame.sequence_nr;
        if seq < state.expected {
            // replay of an already classified frame, or a frame whose gap was skipped
            let decision = state.decisions.get(&seq).copied().flatten();
            return Self::emit_decision(out, &input, frame, decision);
        }
        if let Some((older, _)) = state.held.insert(seq, (input, frame.clone())) {
            out.ack(&older);
        }
        let stream = frame.stream_id;
        self.drain(&stream, out)
    }

    fn tick(&mut self, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let now = out.now_ms();
        let timeout = self.cfg.reorder_timeout_ms;
        let stalled: Vec<String> = self
            .streams
            .iter()
            .filter(|(_, s)| s.waiting_since.is_some_and(|t| now >= t + timeout))
            .map(|(k, _)| k.clone())
            .collect();
        for stream in stalled {
            let state = self.streams.get_mut(&stream).expect("listed above");
            if let Some(&next) = state.held.keys().next() {
                log::warn!("{stream}: frames {}..{next} never arrived, skipping", state.expected);
                self.gaps_skipped += next - state.expected;
                state.expected = next;
            }
            state.waiting_since = None;
            self.drain(&stream, out)?;
        }
        Ok(())
    }

    fn next_wakeup(&self) -> Option<u64> {
        self.streams.values().filter_map(|s| s.waiting_since).min().map(|t| t + self.cfg.reorder_timeout_ms)
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        vec![
            ("passed".to_string(), self.passed),
            ("rejected".to_string(), self.rejected),
            ("gaps_skipped".to_string(), self.gaps_skipped),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, px: Vec<u8>) -> Frame {
        Frame::new("s", 0, 0, w, h, 1, px).unwrap()
    }

    #[test]
    fn luma_values() {
        let f = Frame::new("s", 0, 0, 2, 1, 3, vec![255, 255, 255, 255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&f).pixels, vec![255, 76]);
        let g = gray(2, 1, vec![3, 4]);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn accumulate_midpoint_and_degenerate_rate() {
        let mut m = BackgroundModel::new(1, 1, 0.5);
        m.accumulate_weighted(&gray(1, 1, vec![100])).unwrap();
        assert_eq!(m.accumulator(), &[100.0]);
        m.accumulate_weighted(&gray(1, 1, vec![200])).unwrap();
        assert_eq!(m.accumulator(), &[150.0]);

        let mut m = BackgroundModel::new(2, 1, 1.0);
        m.accumulate_weighted(&gray(2, 1, vec![1, 2])).unwrap();
        m.accumulate_weighted(&gray(2, 1, vec![9, 8])).unwrap();
        assert_eq!(m.accumulator(), &[9.0, 8.0]);
        assert!(matches!(m.accumulate_weighted(&gray(1, 1, vec![0])), Err(BgError::DimsMismatch { .. })));
    }

    #[test]
    fn threshold_cases() {
        let mut m = BackgroundModel::new(2, 1, 0.05);
        assert_eq!(m.abs_diff_threshold(&gray(2, 1, vec![0, 0]), 25), Err(BgError::Uninitialized));
        m.accumulate_weighted(&gray(2, 1, vec![100, 100])).unwrap();
        assert_eq!(m.abs_diff_threshold(&gray(2, 1, vec![100, 100]), 25).unwrap().data, vec![0, 0]);
        assert_eq!(m.abs_diff_threshold(&gray(2, 1, vec![130, 125]), 25).unwrap().data, vec![255, 0]);
    }

    #[test]
    fn diagonal_pixels_form_one_blob() {
        let mask = BinaryMask { width: 2, height: 2, data: vec![255, 0, 0, 255] };
        let blobs = connected_components(&mask);
        assert_eq!(blobs, vec![Blob { area: 2, bbox: BBox::new(0, 0, 2, 2) }]);
        let empty = BinaryMask { width: 3, height: 3, data: vec![0; 9] };
        assert!(connected_components(&empty).is_empty());
    }

    #[test]
    fn u_shape_merges_labels() {
        #[rustfmt::skip]
        let data = vec![
            255, 0, 255,
            255, 0, 255,
            255, 255, 255,
        ];
        let blobs = connected_components(&BinaryMask { width: 3, height: 3, data });
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 7);
    }

    #[test]
    fn gate_boundaries() {
        let blob = |area| Blob { area, bbox: BBox::new(0, 0, 1, 1) };
        assert_eq!(foreground_gate(&[blob(30_720)], 640 * 480, 0.10), None);
        assert!(foreground_gate(&[blob(31_000)], 640 * 480, 0.10).is_some());
        assert_eq!(foreground_gate(&[], 640 * 480, 0.10), None);
        assert_eq!(foreground_gate(&[blob(5), blob(40_000), blob(7)], 640 * 480, 0.10), Some(blob(40_000)));
    }

    #[test]
    fn first_frame_initializes_without_passing() {
        let mut sub = BackgroundSubtractor::new(BgSubConfig::default());
        let f = gray(10, 10, vec![200; 100]);
        assert_eq!(sub.process(&f), None);
        assert_eq!(sub.model().unwrap().accumulator()[0], 200.0);
        let g = gray(10, 10, vec![0; 100]);
        let blob = sub.process(&g).unwrap();
        assert_eq!(blob.area, 100);
    }
}
