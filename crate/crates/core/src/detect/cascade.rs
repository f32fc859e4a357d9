//! Haar cascade evaluation over integral images.

use crate::bgsub::to_grayscale;
use crate::model::{BBox, Descriptor, Frame};

use super::integral::IntegralImage;
use super::nms::{nms_clusters, Detection};
use super::scan::{positions, ScanParams, Size};
use super::DetectError;

pub const FACE_LABEL: &str = "face";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakClassifier {
    pub rects: Vec<HaarRect>,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub weak: Vec<WeakClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaarCascade {
    pub base_width: u32,
    pub base_height: u32,
    pub stages: Vec<Stage>,
}

impl HaarCascade {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.base_width == 0 || self.base_height == 0 {
            return Err(DetectError::InvalidModel("base window must be non-empty".into()));
        }
        if self.stages.is_empty() {
            return Err(DetectError::InvalidModel("cascade has no stages".into()));
        }
        for (si, stage) in self.stages.iter().enumerate() {
            for weak in &stage.weak {
                if weak.rects.is_empty() || weak.rects.len() > 3 {
                    return Err(DetectError::InvalidModel(format!("stage {si}: weak classifier needs 1 to 3 rects")));
                }
                for r in &weak.rects {
                    let inside = r.w >= 1
                        && r.h >= 1
                        && u64::from(r.x) + u64::from(r.w) <= u64::from(self.base_width)
                        && u64::from(r.y) + u64::from(r.h) <= u64::from(self.base_height);
                    if !inside {
                        return Err(DetectError::InvalidModel(format!("stage {si}: rect {r:?} outside base window")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn base_size(&self) -> Size {
        Size::new(self.base_width, self.base_height)
    }

    /// Window size at `scale`.
    pub fn window_at(&self, scale: f64) -> Size {
        Size::new(
            (f64::from(self.base_width) * scale).round() as u32,
            (f64::from(self.base_height) * scale).round() as u32,
        )
    }
}

/// Integral and squared-integral tables of a grayscale image.
#[derive(Debug, Clone)]
pub struct CascadeImage {
    pub sum: IntegralImage,
    pub squares: IntegralImage,
}

impl CascadeImage {
    pub fn new(gray: &[u8], width: u32, height: u32) -> Self {
        CascadeImage { sum: IntegralImage::new(gray, width, height), squares: IntegralImage::squared(gray, width, height) }
    }
}

/// Standard deviation of the pixels in a window, or 1 for a flat window.
pub fn window_std(img: &CascadeImage, x: u32, y: u32, w: u32, h: u32) -> f64 {
    let n = i128::from(w) * i128::from(h);
    let s = i128::from(img.sum.rect_sum(x, y, w, h));
    let sq = i128::from(img.squares.rect_sum(x, y, w, h));
    let spread = n * sq - s * s;
    if spread <= 0 {
        1.0
    } else {
        (spread as f64).sqrt() / n as f64
    }
}

/// Threshold scale for a window: pixel standard deviation times the window
/// area relative to the base window, so thresholds stay in base-window units.
pub fn variance_norm(img: &CascadeImage, cascade: &HaarCascade, x: u32, y: u32, window: Size) -> f64 {
    let rel_area = f64::from(window.width) * f64::from(window.height)
        / (f64::from(cascade.base_width) * f64::from(cascade.base_height));
    window_std(img, x, y, window.width, window.height) * rel_area
}

/// A rect scaled into a window of size `window`, rounded and kept inside it.
pub fn scale_rect(r: &HaarRect, scale: f64, window: Size) -> (u32, u32, u32, u32) {
    let x = ((f64::from(r.x) * scale).round() as u32).min(window.width - 1);
    let y = ((f64::from(r.y) * scale).round() as u32).min(window.height - 1);
    let w = ((f64::from(r.w) * scale).round() as u32).clamp(1, window.width - x);
    let h = ((f64::from(r.h) * scale).round() as u32).clamp(1, window.height - y);
    (x, y, w, h)
}

#[derive(Debug, Clone)]
struct ScaledWeak {
    rects: Vec<(u32, u32, u32, u32, f64)>,
    threshold: f64,
    left: f64,
    right: f64,
}

#[derive(Debug, Clone)]
struct ScaledStage {
    threshold: f64,
    weak: Vec<ScaledWeak>,
}

fn scale_stage(stage: &Stage, scale: f64, window: Size) -> ScaledStage {
    ScaledStage {
        threshold: stage.threshold,
        weak: stage
            .weak
            .iter()
            .map(|w| ScaledWeak {
                rects: w
                    .rects
                    .iter()
                    .map(|r| {
                        let (x, y, rw, rh) = scale_rect(r, scale, window);
                        (x, y, rw, rh, r.weight)
                    })
                    .collect(),
                threshold: w.threshold,
                left: w.left,
                right: w.right,
            })
            .collect(),
    }
}

/// Stage sum at a window origin.
fn stage_sum(img: &CascadeImage, ox: u32, oy: u32, stage: &ScaledStage, norm: f64) -> f64 {
    stage
        .weak
        .iter()
        .map(|w| {
            let value: f64 =
                w.rects.iter().map(|&(x, y, rw, rh, weight)| weight * img.sum.rect_sum(ox + x, oy + y, rw, rh) as f64).sum();
            if value < w.threshold * norm {
                w.left
            } else {
                w.right
            }
        })
        .sum()
}

/// Evaluates one stage for the window at `origin` scaled by `scale`.
pub fn eval_stage(img: &CascadeImage, cascade: &HaarCascade, origin: (u32, u32), scale: f64, stage: &Stage, norm: f64) -> bool {
    let window = cascade.window_at(scale);
    let scaled = scale_stage(stage, scale, window);
    stage_sum(img, origin.0, origin.1, &scaled, norm) >= stage.threshold
}

/// Per-stage evaluation counts collected while scanning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CascadeStats {
    pub windows: u64,
    pub stage_evaluations: Vec<u64>,
}

/// Cascade prepared for one scale.
pub struct ScaledCascade {
    pub scale: f64,
    pub window: Size,
    stages: Vec<ScaledStage>,
}

impl ScaledCascade {
    pub fn new(cascade: &HaarCascade, scale: f64) -> Self {
        let window = cascade.window_at(scale);
        ScaledCascade { scale, window, stages: cascade.stages.iter().map(|s| scale_stage(s, scale, window)).collect() }
    }

    /// Runs the stages in order and stops at the first rejection. Returns
    /// the margin of the last stage when every stage passes.
    pub fn evaluate(&self, img: &CascadeImage, cascade: &HaarCascade, x: u32, y: u32, stats: &mut CascadeStats) -> Option<f64> {
        let norm = variance_norm(img, cascade, x, y, self.window);
        stats.windows += 1;
        if stats.stage_evaluations.len() < self.stages.len() {
            stats.stage_evaluations.resize(self.stages.len(), 0);
        }
        let mut margin = 0.0;
        for (i, stage) in self.stages.iter().enumerate() {
            stats.stage_evaluations[i] += 1;
            let sum = stage_sum(img, x, y, stage, norm);
            if sum < stage.threshold {
                return None;
            }
            margin = sum - stage.threshold;
        }
        Some(margin)
    }
}

/// Scales `scaleFactor^k` whose window fits the image, `maxSize` and `minSize`.
pub fn cascade_scales(cascade: &HaarCascade, width: u32, height: u32, params: &ScanParams) -> Vec<f64> {
    let limit = Size::new(params.max_size.width.min(width), params.max_size.height.min(height));
    let mut scales = Vec::new();
    let mut scale = 1.0f64;
    loop {
        let window = cascade.window_at(scale);
        if !window.fits_in(limit) {
            break;
        }
        if params.min_size.fits_in(window) {
            scales.push(scale);
        }
        scale *= params.scale_factor;
    }
    scales
}

/// Every window passing all stages, before suppression.
pub fn raw_cascade_detections(
    gray: &[u8],
    width: u32,
    height: u32,
    cascade: &HaarCascade,
    params: &ScanParams,
    stats: &mut CascadeStats,
) -> Vec<Detection> {
    let img = CascadeImage::new(gray, width, height);
    let mut out = Vec::new();
    for scale in cascade_scales(cascade, width, height, params) {
        let sc = ScaledCascade::new(cascade, scale);
        let nx = positions(width, sc.window.width, params.window_stride);
        let ny = positions(height, sc.window.height, params.window_stride);
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (i * params.window_stride, j * params.window_stride);
                if let Some(score) = sc.evaluate(&img, cascade, x, y, stats) {
                    out.push(Detection { bbox: BBox::new(x, y, sc.window.width, sc.window.height), score });
                }
            }
        }
    }
    out
}

/// Suppresses overlapping raw hits; confidence is the share of raw hits
/// overlapping the winner that were merged into it.
pub fn merge_detections(raw: &[Detection], iou_threshold: f64, label: &str) -> Vec<Descriptor> {
    nms_clusters(raw, iou_threshold)
        .into_iter()
        .map(|c| {
            let overlapping = raw.iter().filter(|d| d.bbox.intersection_area(&c.winner.bbox) > 0).count();
            Descriptor {
                bbox: c.winner.bbox,
                label: label.to_string(),
                confidence: (c.merged as f64 / overlapping.max(1) as f64).clamp(0.0, 1.0),
            }
        })
        .collect()
}

pub fn detect_multiscale_cascade(frame: &Frame, cascade: &HaarCascade, params: &ScanParams) -> Vec<Descriptor> {
    let gray = to_grayscale(frame);
    let mut stats = CascadeStats::default();
    let raw = raw_cascade_detections(&gray.pixels, gray.width, gray.height, cascade, params, &mut stats);
    merge_detections(&raw, params.nms_iou_threshold, FACE_LABEL)
}
