use log::warn;

use crate::annotate::LABELLED_STREAM;
use crate::bgsub::ELIGIBLE_STREAM;
use crate::detect::{FACE_LABEL, PERSON_LABEL};
use crate::runtime::{Bolt, BoltError, Collector, TupleEnvelope};
use crate::transport::decode_input;

use super::writer::{Category, FrameWriter, WriteOutcome};
use super::SinkConfig;

/// Writes eligible frames to EligibleFrames and labelled frames to Faces
/// and/or Persons depending on which detections they carry. A failed write
/// fails the tuple so the frame is replayed.
pub struct ExportBolt {
    writer: FrameWriter,
    written: [u64; 3],
    deduped: u64,
    write_errors: u64,
}

impl ExportBolt {
    pub fn new(cfg: SinkConfig) -> Self {
        ExportBolt { writer: FrameWriter::new(cfg), written: [0; 3], deduped: 0, write_errors: 0 }
    }
}

impl Bolt for ExportBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let Some(frame) = decode_input(&input, out) else { return Ok(()) };
        let categories: Vec<Category> = match &*input.stream {
            ELIGIBLE_STREAM => vec![Category::Eligible],
            LABELLED_STREAM => [(FACE_LABEL, Category::Face), (PERSON_LABEL, Category::Person)]
                .into_iter()
                .filter(|(label, _)| frame.descriptor_count(label) > 0)
                .map(|(_, c)| c)
                .collect(),
            other => {
                out.report_error(&format!("unexpected stream {other}"));
                out.ack(&input);
                return Ok(());
            }
        };
        for category in categories {
            match self.writer.write_frame(&frame, category) {
                Ok(WriteOutcome::Written(_)) => self.written[category as usize] += 1,
                Ok(WriteOutcome::Deduped(_)) => self.deduped += 1,
                Err(e) => {
                    warn!("{}#{}: {e}", frame.stream_id, frame.sequence_nr);
                    self.write_errors += 1;
                    out.report_error("frame write failed");
                    out.fail(&input);
                    return Ok(());
                }
            }
        }
        out.ack(&input);
        Ok(())
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        vec![
            ("eligible_written".to_string(), self.written[Category::Eligible as usize]),
            ("faces_written".to_string(), self.written[Category::Face as usize]),
            ("persons_written".to_string(), self.written[Category::Person as usize]),
            ("deduped".to_string(), self.deduped),
            ("write_errors".to_string(), self.write_errors),
        ]
    }
}
