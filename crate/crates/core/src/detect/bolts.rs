use std::sync::Arc;

use crate::model::{Descriptor, Feature, Frame};
use crate::runtime::{Bolt, BoltError, Collector, TupleEnvelope};
use crate::transport::{decode_input, frame_payload};

use super::cascade::{detect_multiscale_cascade, HaarCascade, FACE_LABEL};
use super::hog::{detect_multiscale_hog, HogModel, PERSON_LABEL};
use super::scan::ScanParams;

pub const FACES_STREAM: &str = "faces";
pub const PERSONS_STREAM: &str = "persons";

/// Replaces any feature of the same name and emits the frame. Frames with no
/// detections are emitted too so the labeller's join sees both sides.
fn attach_and_emit(
    out: &mut Collector<'_>,
    input: &TupleEnvelope,
    mut frame: Frame,
    stream: &str,
    label: &str,
    found: Vec<Descriptor>,
) -> Result<(), BoltError> {
    frame.features.retain(|f| f.name != label);
    frame.features.push(Feature::new(label, found));
    let payload = frame_payload(&frame).map_err(|e| BoltError::Fatal(e.to_string()))?;
    out.emit(stream, payload, &[input])?;
    out.ack(input);
    Ok(())
}

pub struct FaceBolt {
    cascade: Arc<HaarCascade>,
    params: ScanParams,
    frames: u64,
    detections: u64,
}

impl FaceBolt {
    pub fn new(cascade: Arc<HaarCascade>, params: ScanParams) -> Self {
        FaceBolt { cascade, params, frames: 0, detections: 0 }
    }
}

impl Bolt for FaceBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let Some(frame) = decode_input(&input, out) else { return Ok(()) };
        let found = detect_multiscale_cascade(&frame, &self.cascade, &self.params);
        self.frames += 1;
        self.detections += found.len() as u64;
        attach_and_emit(out, &input, frame, FACES_STREAM, FACE_LABEL, found)
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        vec![("frames".to_string(), self.frames), ("faces".to_string(), self.detections)]
    }
}

pub struct PersonBolt {
    model: Arc<HogModel>,
    params: ScanParams,
    frames: u64,
    detections: u64,
}

impl PersonBolt {
    pub fn new(model: Arc<HogModel>, params: ScanParams) -> Self {
        PersonBolt { model, params, frames: 0, detections: 0 }
    }
}

impl Bolt for PersonBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let Some(frame) = decode_input(&input, out) else { return Ok(()) };
        let found = detect_multiscale_hog(&frame, &self.model, &self.params);
        self.frames += 1;
        self.detections += found.len() as u64;
        attach_and_emit(out, &input, frame, PERSONS_STREAM, PERSON_LABEL, found)
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        vec![("frames".to_string(), self.frames), ("persons".to_string(), self.detections)]
    }
}
