//! Binary PGM (P5) and PPM (P6) reading and writing, maxval 255 only.
//!
//! Header comments are preserved on decode so that writers can carry small
//! metadata records (see [`FrameMeta`]).

use thiserror::Error;

use crate::model::Frame;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PnmError {
    #[error("not a binary PGM/PPM file")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
    pub comments: Vec<String>,
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
    comments: Vec<String>,
}

impl<'a> Header<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c == b'#' {
                let start = self.pos + 1;
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                let text = String::from_utf8_lossy(&self.data[start..self.pos]);
                self.comments.push(text.trim().to_string());
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<u32, PnmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::BadHeader("expected a decimal number"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PnmError::BadHeader("number out of range"))
    }
}

pub fn decode_pnm(data: &[u8]) -> Result<PnmImage, PnmError> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(PnmError::BadMagic);
    }
    let channels = match data[1] {
        b'5' => 1u8,
        b'6' => 3u8,
        _ => return Err(PnmError::BadMagic),
    };
    let mut header = Header { data, pos: 2, comments: Vec::new() };
    let width = header.number()?;
    let height = header.number()?;
    let maxval = header.number()?;
    if width == 0 || height == 0 {
        return Err(PnmError::BadHeader("zero dimension"));
    }
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match data.get(header.pos) {
        Some(c) if c.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(PnmError::BadHeader("missing whitespace after maxval")),
    }
    let expected = Frame::expected_len(width, height, channels).ok_or(PnmError::BadHeader("dimensions overflow"))?;
    let raster = &data[header.pos..];
    if raster.len() < expected {
        return Err(PnmError::Truncated { expected, found: raster.len() });
    }
    Ok(PnmImage {
        width,
        height,
        channels,
        pixels: raster[..expected].to_vec(),
        comments: header.comments,
    })
}

fn encode(magic: &str, width: u32, height: u32, pixels: &[u8], comments: &[String]) -> Vec<u8> {
    let mut out = Vec::with_capacity(pixels.len() + 64);
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    for c in comments {
        out.extend_from_slice(b"# ");
        out.extend_from_slice(c.replace('\n', " ").as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(format!("{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_pgm(width: u32, height: u32, gray: &[u8], comments: &[String]) -> Vec<u8> {
    debug_assert_eq!(gray.len(), width as usize * height as usize);
    encode("P5", width, height, gray, comments)
}

pub fn encode_ppm(width: u32, height: u32, rgb: &[u8], comments: &[String]) -> Vec<u8> {
    debug_assert_eq!(rgb.len(), width as usize * height as usize * 3);
    encode("P6", width, height, rgb, comments)
}

/// Frame identity stored in a PPM header comment: `vigil stream=<id> seq=<n> ts=<ms>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    pub stream_id: String,
    pub sequence_nr: u64,
    pub timestamp_ms: i64,
}

impl FrameMeta {
    pub fn of(frame: &Frame) -> Self {
        FrameMeta {
            stream_id: frame.stream_id.clone(),
            sequence_nr: frame.sequence_nr,
            timestamp_ms: frame.timestamp_ms,
        }
    }

    pub fn to_comment(&self) -> String {
        format!("vigil stream={} seq={} ts={}", self.stream_id, self.sequence_nr, self.timestamp_ms)
    }

    pub fn parse(comment: &str) -> Option<Self> {
        let rest = comment.strip_prefix("vigil ")?;
        let (mut stream, mut seq, mut ts) = (None, None, None);
        for part in rest.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "stream" => stream = Some(v.to_string()),
                "seq" => seq = v.parse().ok(),
                "ts" => ts = v.parse().ok(),
                _ => {}
            }
        }
        Some(FrameMeta { stream_id: stream?, sequence_nr: seq?, timestamp_ms: ts? })
    }

    pub fn find(comments: &[String]) -> Option<Self> {
        comments.iter().find_map(|c| FrameMeta::parse(c))
    }
}

/// Encodes a frame as PPM (grayscale is expanded to RGB) with its identity comment.
pub fn frame_to_ppm(frame: &Frame) -> Vec<u8> {
    let comments = [FrameMeta::of(frame).to_comment()];
    if frame.channels == 3 {
        encode_ppm(frame.width, frame.height, &frame.pixels, &comments)
    } else {
        encode_ppm(frame.width, frame.height, &frame.to_rgb().pixels, &comments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let pixels: Vec<u8> = (0..12).collect();
        let bytes = encode_pgm(4, 3, &pixels, &["hello".into()]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels, 1);
        assert_eq!((img.width, img.height), (4, 3));
        assert_eq!(img.pixels, pixels);
        assert_eq!(img.comments, vec!["hello".to_string()]);
    }

    #[test]
    fn ppm_header_with_interleaved_comments() {
        let mut bytes = b"P6\n# a\n2 # b\n1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.pixels, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(img.comments.len(), 2);
    }

    #[test]
    fn rejects_ascii_and_16_bit_variants() {
        assert_eq!(decode_pnm(b"P2\n1 1\n255\n0"), Err(PnmError::BadMagic));
        assert_eq!(decode_pnm(b"P5\n1 1\n65535\n\0\0"), Err(PnmError::UnsupportedMaxval(65535)));
        assert!(matches!(decode_pnm(b"P5\n2 2\n255\n\0"), Err(PnmError::Truncated { .. })));
        assert!(decode_pnm(b"").is_err());
    }

    #[test]
    fn frame_meta_comment_round_trip() {
        let meta = FrameMeta { stream_id: "cam_1".into(), sequence_nr: 42, timestamp_ms: -5 };
        assert_eq!(FrameMeta::parse(&meta.to_comment()), Some(meta));
        assert_eq!(FrameMeta::parse("other"), None);
    }

    #[test]
    fn gray_frame_written_as_rgb_ppm() {
        let f = Frame::new("c", 3, 9, 2, 1, 1, vec![10, 20]).unwrap();
        let img = decode_pnm(&frame_to_ppm(&f)).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.pixels, vec![10, 10, 10, 20, 20, 20]);
        let meta = FrameMeta::find(&img.comments).unwrap();
        assert_eq!((meta.sequence_nr, meta.timestamp_ms), (3, 9));
    }
}
