//! Small hand-built detector models and the synthetic images they were
//! built from. Vendor-trained models are not shipped, so the demo models and
//! the tests use these.

use super::cascade::{CascadeImage, HaarCascade, HaarRect, Stage, WeakClassifier};
use super::hog::{hog_descriptor, HogModel, WINDOW_HEIGHT, WINDOW_WIDTH};
use super::integral::IntegralImage;
use super::scan::Size;

pub const FACE_BASE: u32 = 24;
pub const SKIN: u8 = 200;
pub const FEATURE_DARK: u8 = 40;
pub const FIGURE: u8 = 40;
pub const BACKDROP: u8 = 190;

fn fill(img: &mut [u8], stride: u32, x: u32, y: u32, w: u32, h: u32, value: u8) {
    for row in y..y + h {
        let start = (row * stride + x) as usize;
        img[start..start + w as usize].fill(value);
    }
}

const LEFT_EYE: (u32, u32, u32, u32) = (4, 7, 6, 3);
const RIGHT_EYE: (u32, u32, u32, u32) = (14, 7, 6, 3);
const MOUTH: (u32, u32, u32, u32) = (7, 17, 10, 3);

/// A 24×24 face: a bright square with two dark eyes and a dark
/// mouth. The profile variant shows a single eye shifted to one side.
pub fn face_prototype(frontal: bool) -> Vec<u8> {
    let mut img = vec![SKIN; (FACE_BASE * FACE_BASE) as usize];
    let mut dark = |(x, y, w, h): (u32, u32, u32, u32)| fill(&mut img, FACE_BASE, x, y, w, h, FEATURE_DARK);
    if frontal {
        dark(LEFT_EYE);
        dark(RIGHT_EYE);
        dark(MOUTH);
    } else {
        dark((2, 7, 6, 3));
        dark((2, 17, 8, 3));
    }
    img
}

/// Dark region minus the equally sized region just below it (above it for
/// the mouth).
fn contrast_rects((x, y, w, h): (u32, u32, u32, u32), below: bool) -> Vec<HaarRect> {
    let other_y = if below { y + h } else { y - h };
    vec![HaarRect { x, y, w, h, weight: 1.0 }, HaarRect { x, y: other_y, w, h, weight: -1.0 }]
}

/// Three one-feature stages (left eye, right eye, mouth). Each threshold is
/// half the variance-normalized response of the frontal prototype, so a
/// window must show all three dark regions to pass.
pub fn frontal_face_cascade() -> HaarCascade {
    let proto = face_prototype(true);
    let img = CascadeImage::new(&proto, FACE_BASE, FACE_BASE);
    let mut probe = HaarCascade { base_width: FACE_BASE, base_height: FACE_BASE, stages: Vec::new() };
    let norm = super::cascade::variance_norm(&img, &probe, 0, 0, Size::new(FACE_BASE, FACE_BASE));
    for rects in [contrast_rects(LEFT_EYE, true), contrast_rects(RIGHT_EYE, true), contrast_rects(MOUTH, false)] {
        let response: f64 = rects.iter().map(|r| r.weight * response_sum(&img.sum, r)).sum();
        probe.stages.push(Stage {
            threshold: 1.0,
            weak: vec![WeakClassifier { rects, threshold: 0.5 * response / norm, left: 1.0, right: 0.0 }],
        });
    }
    probe
}

fn response_sum(ii: &IntegralImage, r: &HaarRect) -> f64 {
    ii.rect_sum(r.x, r.y, r.w, r.h) as f64
}

/// A 64×128 stick figure: head, torso, two legs, dark on a light backdrop.
pub fn person_prototype() -> Vec<u8> {
    let mut img = vec![BACKDROP; (WINDOW_WIDTH * WINDOW_HEIGHT) as usize];
    fill(&mut img, WINDOW_WIDTH, 24, 8, 16, 16, FIGURE);
    fill(&mut img, WINDOW_WIDTH, 16, 28, 32, 48, FIGURE);
    fill(&mut img, WINDOW_WIDTH, 18, 76, 10, 44, FIGURE);
    fill(&mut img, WINDOW_WIDTH, 36, 76, 10, 44, FIGURE);
    img
}

/// Linear model whose weights are the prototype's descriptor `d`, with bias
/// `-0.8·|d|²`: a window scores above zero only when its descriptor points
/// close to the prototype's.
pub fn person_model() -> HogModel {
    let d = hog_descriptor(&person_prototype(), WINDOW_WIDTH, WINDOW_HEIGHT).expect("prototype is 64x128");
    let norm2: f64 = d.iter().map(|v| v * v).sum();
    HogModel { weights: d, bias: -0.8 * norm2, hit_threshold: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn models_validate() {
        frontal_face_cascade().validate().unwrap();
        person_model().validate().unwrap();
    }

    #[test]
    fn prototype_thresholds_are_negative() {
        for stage in frontal_face_cascade().stages {
            assert!(stage.weak[0].threshold < 0.0);
        }
    }
}
