//! Histogram-of-oriented-gradients descriptor and linear-SVM person detection.

use crate::bgsub::to_grayscale;
use crate::model::{BBox, Descriptor, Frame};

use super::nms::{nms_clusters, Detection};
use super::scan::{positions, resize_bilinear, ScanParams, Size};
use super::DetectError;

pub const PERSON_LABEL: &str = "person";
pub const WINDOW_WIDTH: u32 = 64;
pub const WINDOW_HEIGHT: u32 = 128;
pub const CELL: u32 = 8;
pub const BINS: usize = 9;
pub const BLOCK_CELLS: u32 = 2;
pub const BLOCKS_X: u32 = (WINDOW_WIDTH / CELL) - BLOCK_CELLS + 1;
pub const BLOCKS_Y: u32 = (WINDOW_HEIGHT / CELL) - BLOCK_CELLS + 1;
pub const BLOCK_LEN: usize = (BLOCK_CELLS * BLOCK_CELLS) as usize * BINS;
pub const DESCRIPTOR_LEN: usize = (BLOCKS_X * BLOCKS_Y) as usize * BLOCK_LEN;
pub const L2HYS_CLIP: f64 = 0.2;
pub const L2HYS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HogModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hit_threshold: f64,
}

impl HogModel {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.weights.len() != DESCRIPTOR_LEN {
            return Err(DetectError::InvalidModel(format!(
                "HOG weight vector has {} entries, expected {DESCRIPTOR_LEN}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() || !self.hit_threshold.is_finite() {
            return Err(DetectError::InvalidModel("HOG model has non-finite values".into()));
        }
        Ok(())
    }

    pub fn score(&self, descriptor: &[f64]) -> f64 {
        self.weights.iter().zip(descriptor).map(|(w, d)| w * d).sum::<f64>() + self.bias
    }
}

/// Splits a gradient orientation in [0, 180) between the two nearest bin
/// centres (10°, 30°, …, 170°), wrapping around at 0°/180°.
pub fn orientation_bins(angle_deg: f64) -> [(usize, f64); 2] {
    let pos = angle_deg / (180.0 / BINS as f64) - 0.5;
    let lower = pos.floor();
    let frac = pos - lower;
    let b0 = (lower as i64).rem_euclid(BINS as i64) as usize;
    let b1 = (b0 + 1) % BINS;
    [(b0, 1.0 - frac), (b1, frac)]
}

/// Magnitude and unsigned orientation of the centred-difference gradient at
/// every pixel, replicating border pixels.
fn gradients(gray: &[u8], w: usize, h: usize) -> Vec<(f64, f64)> {
    let px = |x: usize, y: usize| f64::from(gray[y * w + x]);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = px(right, y) - px(left, y);
            let gy = px(x, down) - px(x, up);
            let mag = (gx * gx + gy * gy).sqrt();
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            out.push((mag, angle));
        }
    }
    out
}

/// Cell histograms over a whole image: `cells_x × cells_y` cells, row-major.
struct CellGrid {
    cells_x: usize,
    cells_y: usize,
    hist: Vec<[f64; BINS]>,
}

impl CellGrid {
    fn new(gray: &[u8], w: u32, h: u32) -> Self {
        let (w, h) = (w as usize, h as usize);
        let grads = gradients(gray, w, h);
        let cell = CELL as usize;
        let (cells_x, cells_y) = (w / cell, h / cell);
        let mut hist = vec![[0.0; BINS]; cells_x * cells_y];
        for cy in 0..cells_y {
            for cx in 0..cells_x {
                let hcell = &mut hist[cy * cells_x + cx];
                for y in cy * cell..(cy + 1) * cell {
                    for x in cx * cell..(cx + 1) * cell {
                        let (mag, angle) = grads[y * w + x];
                        if mag == 0.0 {
                            continue;
                        }
                        for (bin, weight) in orientation_bins(angle) {
                            hcell[bin] += mag * weight;
                        }
                    }
                }
            }
        }
        CellGrid { cells_x, cells_y, hist }
    }

    /// L2-Hys normalized block whose top-left cell is (cx, cy).
    fn block(&self, cx: usize, cy: usize) -> [f64; BLOCK_LEN] {
        let mut v = [0.0; BLOCK_LEN];
        let mut k = 0;
        for dy in 0..BLOCK_CELLS as usize {
            for dx in 0..BLOCK_CELLS as usize {
                for &b in &self.hist[(cy + dy) * self.cells_x + cx + dx] {
                    v[k] = b;
                    k += 1;
                }
            }
        }
        l2_hys(&mut v);
        v
    }
}

/// L2 normalize, clip at 0.2, renormalize; `v / (||v|| + eps)` each time.
pub fn l2_hys(v: &mut [f64]) {
    let normalize = |v: &mut [f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt() + L2HYS_EPS;
        v.iter_mut().for_each(|x| *x /= norm);
    };
    normalize(v);
    v.iter_mut().for_each(|x| *x = x.min(L2HYS_CLIP));
    normalize(v);
}

/// Descriptor of an exact 64×128 grayscale window, blocks row-major and
/// cells row-major inside each block.
pub fn hog_descriptor(window: &[u8], width: u32, height: u32) -> Result<Vec<f64>, DetectError> {
    if (width, height) != (WINDOW_WIDTH, WINDOW_HEIGHT) || window.len() != (width * height) as usize {
        return Err(DetectError::BadWindowSize { width, height });
    }
    let grid = CellGrid::new(window, width, height);
    Ok(window_descriptor(&grid, 0, 0))
}

fn window_descriptor(grid: &CellGrid, cell_x: usize, cell_y: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
    for by in 0..BLOCKS_Y as usize {
        for bx in 0..BLOCKS_X as usize {
            d.extend_from_slice(&grid.block(cell_x + bx, cell_y + by));
        }
    }
    d
}

/// Normalized blocks of a whole pyramid level, computed once and shared by
/// all windows at cell-aligned positions.
struct BlockGrid {
    blocks_x: usize,
    blocks: Vec<[f64; BLOCK_LEN]>,
}

impl BlockGrid {
    fn new(cells: &CellGrid) -> Self {
        let bc = BLOCK_CELLS as usize;
        let blocks_x = (cells.cells_x + 1).saturating_sub(bc);
        let blocks_y = (cells.cells_y + 1).saturating_sub(bc);
        let mut blocks = Vec::with_capacity(blocks_x * blocks_y);
        for cy in 0..blocks_y {
            for cx in 0..blocks_x {
                blocks.push(cells.block(cx, cy));
            }
        }
        BlockGrid { blocks_x, blocks }
    }

    fn score(&self, model: &HogModel, cell_x: usize, cell_y: usize) -> f64 {
        let mut sum = model.bias;
        let mut k = 0;
        for by in 0..BLOCKS_Y as usize {
            for bx in 0..BLOCKS_X as usize {
                let block = &self.blocks[(cell_y + by) * self.blocks_x + cell_x + bx];
                for &v in block {
                    sum += model.weights[k] * v;
                    k += 1;
                }
            }
        }
        sum
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pyramid scales `scaleFactor^k` whose (upscaled) window fits the image,
/// `maxSize` and `minSize`.
pub fn hog_scales(width: u32, height: u32, params: &ScanParams) -> Vec<f64> {
    let limit = Size::new(params.max_size.width.min(width), params.max_size.height.min(height));
    let mut scales = Vec::new();
    let mut scale = 1.0f64;
    loop {
        let window = Size::new(
            (f64::from(WINDOW_WIDTH) * scale).round() as u32,
            (f64::from(WINDOW_HEIGHT) * scale).round() as u32,
        );
        let level = Size::new((f64::from(width) / scale).round() as u32, (f64::from(height) / scale).round() as u32);
        if !window.fits_in(limit) || !Size::new(WINDOW_WIDTH, WINDOW_HEIGHT).fits_in(level) {
            break;
        }
        if params.min_size.fits_in(window) {
            scales.push(scale);
        }
        scale *= params.scale_factor;
    }
    scales
}

/// Raw windows scoring above the model's hit threshold, in original image
/// coordinates. Gradients are taken over each whole pyramid level.
pub fn raw_hog_detections(gray: &[u8], width: u32, height: u32, model: &HogModel, params: &ScanParams) -> Vec<Detection> {
    let mut out = Vec::new();
    for scale in hog_scales(width, height, params) {
        let lw = (f64::from(width) / scale).round() as u32;
        let lh = (f64::from(height) / scale).round() as u32;
        let level = if lw == width && lh == height { gray.to_vec() } else { resize_bilinear(gray, width, height, lw, lh) };
        let nx = positions(lw, WINDOW_WIDTH, params.window_stride);
        let ny = positions(lh, WINDOW_HEIGHT, params.window_stride);
        let cells = CellGrid::new(&level, lw, lh);
        let aligned = params.window_stride % CELL == 0;
        let blocks = aligned.then(|| BlockGrid::new(&cells));
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (i * params.window_stride, j * params.window_stride);
                let score = match &blocks {
                    Some(b) => b.score(model, (x / CELL) as usize, (y / CELL) as usize),
                    None => {
                        let window = crop(&level, lw, x, y, WINDOW_WIDTH, WINDOW_HEIGHT);
                        let d = hog_descriptor(&window, WINDOW_WIDTH, WINDOW_HEIGHT).expect("window size is fixed");
                        model.score(&d)
                    }
                };
                if score > model.hit_threshold {
                    out.push(Detection { bbox: map_back(x, y, scale, width, height), score });
                }
            }
        }
    }
    out
}

fn map_back(x: u32, y: u32, scale: f64, width: u32, height: u32) -> BBox {
    let bx = ((f64::from(x) * scale).round() as u32).min(width - 1);
    let by = ((f64::from(y) * scale).round() as u32).min(height - 1);
    let bw = ((f64::from(WINDOW_WIDTH) * scale).round() as u32).clamp(1, width - bx);
    let bh = ((f64::from(WINDOW_HEIGHT) * scale).round() as u32).clamp(1, height - by);
    BBox::new(bx, by, bw, bh)
}

/// Copies a `w × h` region out of a grayscale image of width `stride`.
pub fn crop(gray: &[u8], stride: u32, x: u32, y: u32, w: u32, h: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity((w * h) as usize);
    for row in y..y + h {
        let start = (row * stride + x) as usize;
        out.extend_from_slice(&gray[start..start + w as usize]);
    }
    out
}

pub fn detect_multiscale_hog(frame: &Frame, model: &HogModel, params: &ScanParams) -> Vec<Descriptor> {
    let gray = to_grayscale(frame);
    let raw = raw_hog_detections(&gray.pixels, gray.width, gray.height, model, params);
    nms_clusters(&raw, params.nms_iou_threshold)
        .into_iter()
        .map(|c| Descriptor { bbox: c.winner.bbox, label: PERSON_LABEL.to_string(), confidence: logistic(c.winner.score) })
        .collect()
}
