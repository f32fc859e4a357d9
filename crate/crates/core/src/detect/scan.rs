use serde::{Deserialize, Serialize};

use super::DetectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub width: u32,
    pub height: u32,
}

impl Size {
    pub const fn new(width: u32, height: u32) -> Self {
        Size { width, height }
    }

    pub fn fits_in(&self, other: Size) -> bool {
        self.width <= other.width && self.height <= other.height
    }
}

/// Multi-scale sliding-window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanParams {
    pub scale_factor: f64,
    /// Step between windows, in pixels of the image being scanned.
    pub window_stride: u32,
    pub min_size: Size,
    pub max_size: Size,
    pub nms_iou_threshold: f64,
}

impl ScanParams {
    pub fn face_defaults() -> Self {
        ScanParams {
            scale_factor: 1.1,
            window_stride: 4,
            min_size: Size::new(24, 24),
            max_size: Size::new(4096, 4096),
            nms_iou_threshold: 0.3,
        }
    }

    pub fn person_defaults() -> Self {
        ScanParams {
            scale_factor: 1.1,
            window_stride: 8,
            min_size: Size::new(64, 128),
            max_size: Size::new(4096, 4096),
            nms_iou_threshold: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.scale_factor > 1.0) {
            return Err(DetectError::BadParams("scaleFactor must be > 1"));
        }
        if self.window_stride == 0 {
            return Err(DetectError::BadParams("windowStride must be positive"));
        }
        if !self.min_size.fits_in(self.max_size) {
            return Err(DetectError::BadParams("minSize must not exceed maxSize"));
        }
        if !(self.nms_iou_threshold > 0.0 && self.nms_iou_threshold < 1.0) {
            return Err(DetectError::BadParams("nmsIouThreshold must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Number of window positions along one axis.
pub fn positions(image: u32, window: u32, stride: u32) -> u32 {
    if window > image {
        0
    } else {
        (image - window) / stride + 1
    }
}

/// Bilinear resize of a grayscale image with pixel-centre alignment.
pub fn resize_bilinear(src: &[u8], sw: u32, sh: u32, dw: u32, dh: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    let fx = f64::from(sw) / f64::from(dw);
    let fy = f64::from(sh) / f64::from(dh);
    let sample = |x: usize, y: usize| f64::from(src[y * sw as usize + x]);
    let axis = |d: u32, f: f64, limit: u32| {
        let s = ((f64::from(d) + 0.5) * f - 0.5).clamp(0.0, f64::from(limit - 1));
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(limit as usize - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..dw).map(|x| axis(x, fx, sw)).collect();
    for y in 0..dh {
        let (y0, y1, ty) = axis(y, fy, sh);
        for &(x0, x1, tx) in &cols {
            let top = sample(x0, y0) * (1.0 - tx) + sample(x1, y0) * tx;
            let bottom = sample(x0, y1) * (1.0 - tx) + sample(x1, y1) * tx;
            out.push((top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}
