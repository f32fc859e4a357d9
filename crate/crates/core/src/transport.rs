//! Frame payloads as carried on topology streams.

use log::warn;

use crate::model::{decode_frame, encode_frame, Frame, FrameError};
use crate::runtime::{Collector, Payload, TupleEnvelope};

/// Key identifying one frame across the topology, e.g. `cam1/0000000042`.
pub fn frame_key(stream_id: &str, seq: u64) -> String {
    format!("{stream_id}/{seq:010}")
}

/// Payload carrying an encoded frame plus the routing fields used by the
/// surveillance topology.
pub fn frame_payload(frame: &Frame) -> Result<Payload, FrameError> {
    Ok(Payload::new(encode_frame(frame)?)
        .with_field("streamId", frame.stream_id.clone())
        .with_field("seq", frame.sequence_nr.to_string())
        .with_field("frameKey", frame_key(&frame.stream_id, frame.sequence_nr)))
}

/// Progress notice: every frame with a sequence number below `through` has
/// settled (completed or given up). `end` marks the final notice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub through: u64,
    pub end: bool,
}

impl Progress {
    pub fn to_payload(self, stream_id: &str) -> Payload {
        Payload::new(Vec::new())
            .with_field("streamId", stream_id)
            .with_field("through", self.through.to_string())
            .with_field("end", if self.end { "1" } else { "0" })
    }

    pub fn from_payload(payload: &Payload) -> Option<Progress> {
        Some(Progress { through: payload.field("through")?.parse().ok()?, end: payload.field("end")? == "1" })
    }
}

/// Decodes the frame carried by `input`. Undecodable payloads go to the
/// error channel and the tuple is acked so it is not replayed forever.
pub fn decode_input(input: &TupleEnvelope, out: &mut Collector<'_>) -> Option<Frame> {
    match decode_frame(input.payload.body()) {
        Ok(frame) => Some(frame),
        Err(e) => {
            warn!("undecodable frame on stream {}: {e}", input.stream);
            out.report_error("undecodable frame payload");
            out.ack(input);
            None
        }
    }
}
