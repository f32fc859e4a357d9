//! Labeller: joins the face and person results for a frame and draws the
//! labelled bounding boxes onto an RGB copy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{FACES_STREAM, FACE_LABEL, PERSONS_STREAM, PERSON_LABEL};
use crate::model::{BBox, Frame};
use crate::runtime::{Bolt, BoltError, Collector, TupleEnvelope};
use crate::transport::{decode_input, frame_payload};

pub mod font;

use font::{glyph_pixel, ADVANCE, GLYPH_HEIGHT, GLYPH_WIDTH};

pub const LABELLED_STREAM: &str = "labelled";
pub const DEFAULT_JOIN_TIMEOUT_MS: u64 = 1000;

pub type Rgb = [u8; 3];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("cannot merge {0} with {1}: different frames")]
    MismatchedIdentity(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LabelStyle {
    pub colors: BTreeMap<String, Rgb>,
    /// Used for labels missing from `colors`.
    pub fallback: Rgb,
}

impl Default for LabelStyle {
    fn default() -> Self {
        let colors = BTreeMap::from([(FACE_LABEL.to_string(), [0, 255, 0]), (PERSON_LABEL.to_string(), [255, 0, 0])]);
        LabelStyle { colors, fallback: [255, 255, 0] }
    }
}

impl LabelStyle {
    pub fn color(&self, label: &str) -> Rgb {
        self.colors.get(label).copied().unwrap_or(self.fallback)
    }
}

struct Canvas<'a> {
    width: u32,
    height: u32,
    rgb: &'a mut [u8],
}

impl Canvas<'_> {
    fn set(&mut self, x: i64, y: i64, color: Rgb) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.rgb[i..i + 3].copy_from_slice(&color);
    }

    fn rect_outline(&mut self, b: &BBox, color: Rgb) {
        let (x0, y0) = (i64::from(b.x), i64::from(b.y));
        let (x1, y1) = (x0 + i64::from(b.w) - 1, y0 + i64::from(b.h) - 1);
        for x in x0..=x1 {
            self.set(x, y0, color);
            self.set(x, y1, color);
        }
        for y in y0..=y1 {
            self.set(x0, y, color);
            self.set(x1, y, color);
        }
    }

    fn text(&mut self, x: i64, y: i64, text: &str, color: Rgb) {
        for (i, c) in text.chars().enumerate() {
            let gx = x + i as i64 * i64::from(ADVANCE);
            if gx >= i64::from(self.width) {
                break;
            }
            for col in 0..GLYPH_WIDTH {
                for row in 0..GLYPH_HEIGHT {
                    if glyph_pixel(c, col, row) {
                        self.set(gx + i64::from(col), y + i64::from(row), color);
                    }
                }
            }
        }
    }
}

/// Top-left of a label: inside the box, past the 1 px outline and 1 px of
/// padding.
pub fn text_origin(b: &BBox) -> (i64, i64) {
    (i64::from(b.x) + 2, i64::from(b.y) + 2)
}

/// RGB copy of `frame` with every descriptor's box outlined and its label
/// written in the label's colour. Features are carried over unchanged.
pub fn label_frame(frame: &Frame, style: &LabelStyle) -> Frame {
    let mut out = frame.to_rgb();
    let mut canvas = Canvas { width: out.width, height: out.height, rgb: &mut out.pixels };
    for feature in &frame.features {
        for d in &feature.descriptors {
            let color = style.color(&d.label);
            canvas.rect_outline(&d.bbox, color);
            let (tx, ty) = text_origin(&d.bbox);
            canvas.text(tx, ty, &d.label, color);
        }
    }
    out
}

/// `a` with the features of `b` that `a` lacks (by name) appended.
pub fn merge_features(a: &Frame, b: &Frame) -> Result<Frame, AnnotateError> {
    if a.stream_id != b.stream_id || a.sequence_nr != b.sequence_nr {
        return Err(AnnotateError::MismatchedIdentity(
            format!("{}#{}", a.stream_id, a.sequence_nr),
            format!("{}#{}", b.stream_id, b.sequence_nr),
        ));
    }
    let mut merged = a.clone();
    for f in &b.features {
        if !merged.features.iter().any(|g| g.name == f.name) {
            merged.features.push(f.clone());
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LabellerConfig {
    pub join_timeout_ms: u64,
    pub style: LabelStyle,
}

impl Default for LabellerConfig {
    fn default() -> Self {
        LabellerConfig { join_timeout_ms: DEFAULT_JOIN_TIMEOUT_MS, style: LabelStyle::default() }
    }
}

struct PendingJoin {
    /// One (tuple, frame) per input stream seen so far.
    sides: Vec<(TupleEnvelope, Frame)>,
    arrived_at: u64,
}

/// Joins the face and person results of each frame on (streamId, seq).
/// When one side does not show up within the join timeout the frame is
/// labelled with what arrived. Frames without any detection are acked and
/// not forwarded.
pub struct LabellerBolt {
    cfg: LabellerConfig,
    sides: Vec<String>,
    pending: HashMap<(String, u64), PendingJoin>,
    labelled: u64,
    joined: u64,
    timed_out: u64,
}

impl LabellerBolt {
    pub fn new(cfg: LabellerConfig) -> Self {
        Self::with_sides(cfg, &[FACES_STREAM, PERSONS_STREAM])
    }

    /// A labeller waiting for one input per stream in `sides`.
    pub fn with_sides(cfg: LabellerConfig, sides: &[&str]) -> Self {
        LabellerBolt {
            cfg,
            sides: sides.iter().map(|s| s.to_string()).collect(),
            pending: HashMap::new(),
            labelled: 0,
            joined: 0,
            timed_out: 0,
        }
    }

    fn complete(&mut self, mut join: PendingJoin, out: &mut Collector<'_>) -> Result<(), BoltError> {
        // After a replay the sides can belong to different trees; the newest
        // arrival's tree is the live one, so only its sides become anchors.
        let live_root = join.sides.last().expect("a join holds at least one side").0.root_id;
        // merge in declared side order so the result does not depend on arrival order
        join.sides.sort_by_key(|(t, _)| self.sides.iter().position(|s| s.as_str() == &*t.stream));
        let mut frames = join.sides.iter().map(|(_, f)| f);
        let first = frames.next().expect("a join holds at least one side").clone();
        let frame = frames.try_fold(first, |acc, f| merge_features(&acc, f)).expect("sides share the join key");
        if frame.features.iter().any(|f| !f.descriptors.is_empty()) {
            let labelled = label_frame(&frame, &self.cfg.style);
            let payload = frame_payload(&labelled).map_err(|e| BoltError::Fatal(e.to_string()))?;
            let anchors: Vec<&TupleEnvelope> =
                join.sides.iter().map(|(t, _)| t).filter(|t| t.root_id == live_root).collect();
            out.emit(LABELLED_STREAM, payload, &anchors)?;
            self.labelled += 1;
        }
        for (input, _) in &join.sides {
            out.ack(input);
        }
        Ok(())
    }
}

impl Bolt for LabellerBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let Some(frame) = decode_input(&input, out) else { return Ok(()) };
        let key = (frame.stream_id.clone(), frame.sequence_nr);
        let now = out.now_ms();
        let mut join = self.pending.remove(&key).unwrap_or(PendingJoin { sides: Vec::new(), arrived_at: now });
        // a replayed copy of a side already held replaces the older tuple
        if let Some(pos) = join.sides.iter().position(|(t, _)| t.stream == input.stream) {
            let (older, _) = join.sides.remove(pos);
            out.ack(&older);
        }
        join.sides.push((input, frame));
        if self.sides.iter().all(|s| join.sides.iter().any(|(t, _)| &*t.stream == s.as_str())) {
            self.joined += 1;
            self.complete(join, out)
        } else {
            self.pending.insert(key, join);
            Ok(())
        }
    }

    fn tick(&mut self, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let now = out.now_ms();
        let timeout = self.cfg.join_timeout_ms;
        let mut expired: Vec<(String, u64)> =
            self.pending.iter().filter(|(_, j)| now >= j.arrived_at + timeout).map(|(k, _)| k.clone()).collect();
        expired.sort();
        for key in expired {
            let join = self.pending.remove(&key).expect("listed above");
            log::debug!("{}#{}: join timed out with {} side(s)", key.0, key.1, join.sides.len());
            self.timed_out += 1;
            self.complete(join, out)?;
        }
        Ok(())
    }

    fn next_wakeup(&self) -> Option<u64> {
        self.pending.values().map(|j| j.arrived_at + self.cfg.join_timeout_ms).min()
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        vec![
            ("labelled".to_string(), self.labelled),
            ("joined".to_string(), self.joined),
            ("join_timeouts".to_string(), self.timed_out),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Descriptor, Feature};

    fn gray(seq: u64) -> Frame {
        Frame::new("cam", seq, 0, 100, 100, 1, vec![100; 100 * 100]).unwrap()
    }

    fn with_face(mut f: Frame, b: BBox) -> Frame {
        f.features.push(Feature::new(FACE_LABEL, vec![Descriptor { bbox: b, label: FACE_LABEL.into(), confidence: 1.0 }]));
        f
    }

    #[test]
    fn no_features_is_plain_rgb_copy() {
        let f = gray(0);
        assert_eq!(label_frame(&f, &LabelStyle::default()), f.to_rgb());
    }

    #[test]
    fn text_is_clipped_at_frame_edge() {
        let f = with_face(gray(0), BBox::new(90, 95, 10, 5));
        let out = label_frame(&f, &LabelStyle::default());
        assert_eq!(out.pixels.len(), 100 * 100 * 3);
    }

    #[test]
    fn merge_unions_and_checks_identity() {
        let a = with_face(gray(7), BBox::new(0, 0, 5, 5));
        let mut b = gray(7);
        b.features.push(Feature::new(PERSON_LABEL, vec![]));
        let m = merge_features(&a, &b).unwrap();
        assert_eq!(m.features.len(), 2);
        assert!(matches!(merge_features(&a, &gray(8)), Err(AnnotateError::MismatchedIdentity(..))));
    }
}
