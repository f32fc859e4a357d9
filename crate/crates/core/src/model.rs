//! Frame / Feature / Descriptor data model and the canonical `FRM1` byte
//! layout used for queue transfer, replay and chunk bodies.
//!
//! All multi-byte integers are little-endian. Layout:
//!
//! ```text
//! "FRM1"
//! streamId      u16 length + UTF-8
//! sequenceNr    u64
//! timestampMs   i64
//! width         u32
//! height        u32
//! channels      u8
//! pixels        width * height * channels bytes
//! featureCount  u16
//!   name        u16 length + UTF-8
//!   descCount   u16
//!     bbox      4 x u32 (x, y, w, h)
//!     label     u16 length + UTF-8
//!     confidence f64
//! ```

use std::io::{self, Read};

use thiserror::Error;

pub const FRAME_MAGIC: &[u8; 4] = b"FRM1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic, expected FRM1")]
    BadMagic,
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after frame record")]
    TrailingBytes(usize),
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn violation(msg: impl Into<String>) -> FrameError {
    FrameError::InvariantViolation(msg.into())
}

/// Axis-aligned box in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// True when the box is non-empty and lies fully inside a `width` x `height` frame.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= u64::from(width) && self.bottom() <= u64::from(height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub bbox: BBox,
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub name: String,
    pub descriptors: Vec<Descriptor>,
}

impl Feature {
    pub fn new(name: impl Into<String>, descriptors: Vec<Descriptor>) -> Self {
        Feature { name: name.into(), descriptors }
    }
}

/// One image of a stream, the unit flowing through every topology stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub stream_id: String,
    pub sequence_nr: u64,
    pub timestamp_ms: i64,
    pub width: u32,
    pub height: u32,
    /// 1 (grayscale) or 3 (interleaved R,G,B).
    pub channels: u8,
    pub pixels: Vec<u8>,
    pub features: Vec<Feature>,
}

impl Frame {
    /// Builds a frame without features and validates it.
    pub fn new(
        stream_id: impl Into<String>,
        sequence_nr: u64,
        timestamp_ms: i64,
        width: u32,
        height: u32,
        channels: u8,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        let frame = Frame {
            stream_id: stream_id.into(),
            sequence_nr,
            timestamp_ms,
            width,
            height,
            channels,
            pixels,
            features: Vec::new(),
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn expected_len(width: u32, height: u32, channels: u8) -> Option<usize> {
        (width as usize)
            .checked_mul(height as usize)?
            .checked_mul(channels as usize)
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Number of descriptors across all features called `name`.
    pub fn descriptor_count(&self, name: &str) -> usize {
        self.features
            .iter()
            .filter(|f| f.name == name)
            .map(|f| f.descriptors.len())
            .sum()
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.width == 0 || self.height == 0 {
            return Err(violation("width and height must be positive"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(violation(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        let expected = Frame::expected_len(self.width, self.height, self.channels)
            .ok_or_else(|| violation("frame dimensions overflow"))?;
        if self.pixels.len() != expected {
            return Err(violation(format!(
                "pixel length {} != {}x{}x{}",
                self.pixels.len(),
                self.width,
                self.height,
                self.channels
            )));
        }
        if self.stream_id.len() > u16::MAX as usize {
            return Err(violation("streamId too long"));
        }
        if self.features.len() > u16::MAX as usize {
            return Err(violation("too many features"));
        }
        for feature in &self.features {
            if feature.name.is_empty() {
                return Err(violation("feature name must be nonempty"));
            }
            if feature.name.len() > u16::MAX as usize || feature.descriptors.len() > u16::MAX as usize {
                return Err(violation("feature too large"));
            }
            for d in &feature.descriptors {
                if !d.bbox.fits_within(self.width, self.height) {
                    return Err(violation(format!("descriptor bbox {:?} outside frame", d.bbox)));
                }
                if !(0.0..=1.0).contains(&d.confidence) {
                    return Err(violation(format!("confidence {} outside [0,1]", d.confidence)));
                }
                if d.label.len() > u16::MAX as usize {
                    return Err(violation("label too long"));
                }
            }
        }
        Ok(())
    }

    /// Grayscale frames are expanded by replicating the channel; RGB frames are copied.
    pub fn to_rgb(&self) -> Frame {
        if self.channels == 3 {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(self.pixels.len() * 3);
        for &v in &self.pixels {
            pixels.extend_from_slice(&[v, v, v]);
        }
        Frame {
            stream_id: self.stream_id.clone(),
            sequence_nr: self.sequence_nr,
            timestamp_ms: self.timestamp_ms,
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
            features: self.features.clone(),
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes a frame into the canonical `FRM1` layout.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(32 + frame.stream_id.len() + frame.pixels.len());
    out.extend_from_slice(FRAME_MAGIC);
    put_str(&mut out, &frame.stream_id);
    out.extend_from_slice(&frame.sequence_nr.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_ms.to_le_bytes());
    out.extend_from_slice(&frame.width.to_le_bytes());
    out.extend_from_slice(&frame.height.to_le_bytes());
    out.push(frame.channels);
    out.extend_from_slice(&frame.pixels);
    out.extend_from_slice(&(frame.features.len() as u16).to_le_bytes());
    for feature in &frame.features {
        put_str(&mut out, &feature.name);
        out.extend_from_slice(&(feature.descriptors.len() as u16).to_le_bytes());
        for d in &feature.descriptors {
            for v in [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_str(&mut out, &d.label);
            out.extend_from_slice(&d.confidence.to_le_bytes());
        }
    }
    Ok(out)
}

/// Strict inverse of [`encode_frame`]: the input must hold exactly one record.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let mut cursor = bytes;
    let frame = read_record(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(FrameError::TrailingBytes(cursor.len()));
    }
    Ok(frame)
}

/// Reads one `FRM1` record from a stream. Returns `Ok(None)` on a clean end
/// of input before the first magic byte.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Frame>, FrameError> {
    let mut first = [0u8; 1];
    loop {
        match reader.read(&mut first) {
            Ok(0) => return Ok(None),
            Ok(_) => break,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(FrameError::Io(e.to_string())),
        }
    }
    let mut chained = (&first[..]).chain(reader);
    read_record(&mut chained).map(Some)
}

fn map_io(e: io::Error) -> FrameError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FrameError::Truncated
    } else {
        FrameError::Io(e.to_string())
    }
}

struct Fields<'a, R: Read>(&'a mut R);

impl<R: Read> Fields<'_, R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N], FrameError> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(map_io)?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn bytes(&mut self, len: usize) -> Result<Vec<u8>, FrameError> {
        // read_to_end through take() grows the buffer as data arrives, so a
        // corrupted length cannot trigger a huge up-front allocation.
        let mut buf = Vec::new();
        (&mut *self.0).take(len as u64).read_to_end(&mut buf).map_err(map_io)?;
        if buf.len() != len {
            return Err(FrameError::Truncated);
        }
        Ok(buf)
    }

    fn string(&mut self, what: &'static str) -> Result<String, FrameError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.bytes(len)?).map_err(|_| FrameError::InvalidUtf8(what))
    }
}

fn read_record<R: Read>(reader: &mut R) -> Result<Frame, FrameError> {
    let mut r = Fields(reader);
    if &r.array::<4>()? != FRAME_MAGIC {
        return Err(FrameError::BadMagic);
    }
    let stream_id = r.string("streamId")?;
    let sequence_nr = r.u64()?;
    let timestamp_ms = r.u64()? as i64;
    let width = r.u32()?;
    let height = r.u32()?;
    let channels = r.u8()?;
    if width == 0 || height == 0 || (channels != 1 && channels != 3) {
        return Err(violation(format!("bad frame header {width}x{height}x{channels}")));
    }
    let len = Frame::expected_len(width, height, channels).ok_or_else(|| violation("frame dimensions overflow"))?;
    let pixels = r.bytes(len)?;
    let feature_count = r.u16()?;
    let mut features = Vec::with_capacity(feature_count.min(64) as usize);
    for _ in 0..feature_count {
        let name = r.string("feature name")?;
        let count = r.u16()?;
        let mut descriptors = Vec::with_capacity(count.min(64) as usize);
        for _ in 0..count {
            let bbox = BBox::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let label = r.string("label")?;
            let confidence = f64::from_le_bytes(r.array()?);
            descriptors.push(Descriptor { bbox, label, confidence });
        }
        features.push(Feature { name, descriptors });
    }
    let frame = Frame { stream_id, sequence_nr, timestamp_ms, width, height, channels, pixels, features };
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Frame {
        let mut f = Frame::new("cam1", 7, 1234, 4, 3, 3, (0..36).collect()).unwrap();
        f.features.push(Feature::new(
            "face",
            vec![Descriptor { bbox: BBox::new(1, 1, 2, 2), label: "face".into(), confidence: 0.75 }],
        ));
        f.features.push(Feature::new("person", vec![]));
        f
    }

    #[test]
    fn one_pixel_gray_frame_layout_size() {
        let f = Frame::new("cam1", 0, 0, 1, 1, 1, vec![9]).unwrap();
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), 4 + (2 + 4) + 8 + 8 + 4 + 4 + 1 + 1 + 2);
        assert_eq!(&bytes[..4], b"FRM1");
    }

    #[test]
    fn round_trip_with_features() {
        let f = sample();
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), f);
        assert_eq!(encode_frame(&f).unwrap(), bytes);
    }

    #[test]
    fn bad_pixel_length_is_rejected() {
        let mut f = sample();
        f.pixels.pop();
        assert!(matches!(encode_frame(&f), Err(FrameError::InvariantViolation(_))));
        assert!(Frame::new("a", 0, 0, 2, 2, 1, vec![0; 3]).is_err());
    }

    #[test]
    fn empty_input_is_truncated() {
        assert_eq!(decode_frame(&[]), Err(FrameError::Truncated));
    }

    #[test]
    fn trailing_byte_is_rejected() {
        let mut bytes = encode_frame(&sample()).unwrap();
        bytes.push(0);
        assert_eq!(decode_frame(&bytes), Err(FrameError::TrailingBytes(1)));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_frame(&sample()).unwrap();
        bytes[3] = b'2';
        assert_eq!(decode_frame(&bytes), Err(FrameError::BadMagic));
    }

    #[test]
    fn bbox_outside_frame_is_invalid() {
        let mut f = sample();
        f.features[0].descriptors[0].bbox = BBox::new(3, 0, 2, 1);
        assert!(f.validate().is_err());
        f.features[0].descriptors[0].bbox = BBox::new(0, 0, 0, 1);
        assert!(f.validate().is_err());
    }

    #[test]
    fn stream_reader_reads_consecutive_records() {
        let a = sample();
        let mut b = sample();
        b.sequence_nr = 8;
        let mut buf = encode_frame(&a).unwrap();
        buf.extend(encode_frame(&b).unwrap());
        let mut cursor = &buf[..];
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(a));
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(b));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);

        let half = &buf[..10];
        let mut cursor = half;
        assert_eq!(read_frame(&mut cursor), Err(FrameError::Truncated));
    }

    #[test]
    fn iou_of_identical_and_disjoint_boxes() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(10, 0, 10, 10)), 0.0);
        let b = BBox::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn gray_to_rgb_replicates() {
        let f = Frame::new("s", 0, 0, 2, 1, 1, vec![3, 200]).unwrap();
        assert_eq!(f.to_rgb().pixels, vec![3, 3, 3, 200, 200, 200]);
    }
}
