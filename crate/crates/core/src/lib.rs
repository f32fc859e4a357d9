//! Building blocks for a distributed video surveillance pipeline: a small
//! stream-processing runtime, frame ingestion, background subtraction,
//! face and pedestrian detection, annotation and persistence.

pub mod model;
pub mod netpbm;
pub mod runtime;
pub mod ingest;
pub mod transport;
pub mod bgsub;
pub mod detect;
pub mod annotate;
pub mod sink;
pub mod pipeline;
