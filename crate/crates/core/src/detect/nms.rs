use std::cmp::Ordering;

use crate::model::BBox;

/// A raw window hit with its detector score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

/// Score descending, then bbox ascending (x, y, w, h).
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.bbox.cmp(&b.bbox))
}

/// A kept detection and how many raw detections it absorbed (itself included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub winner: Detection,
    pub merged: usize,
}

/// Greedy non-maximum suppression. Each suppressed box is credited to the
/// first kept box (in keep order) it overlaps by more than `iou_threshold`.
pub fn nms_clusters(detections: &[Detection], iou_threshold: f64) -> Vec<Cluster> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Cluster> = Vec::new();
    for d in sorted {
        match kept.iter_mut().find(|k| k.winner.bbox.iou(&d.bbox) > iou_threshold) {
            Some(k) => k.merged += 1,
            None => kept.push(Cluster { winner: d, merged: 1 }),
        }
    }
    kept
}

pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_clusters(detections, iou_threshold).into_iter().map(|c| c.winner).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: u32, y: u32, score: f64) -> Detection {
        Detection { bbox: BBox::new(x, y, 10, 10), score }
    }

    #[test]
    fn single_and_identical() {
        assert_eq!(nms(&[det(0, 0, 1.0)], 0.3), vec![det(0, 0, 1.0)]);
        assert_eq!(nms(&[det(5, 5, 1.0), det(5, 5, 1.0)], 0.3).len(), 1);
    }

    #[test]
    fn tie_breaks_on_bbox() {
        let kept = nms(&[det(3, 0, 1.0), det(2, 0, 1.0)], 0.3);
        assert_eq!(kept, vec![det(2, 0, 1.0)]);
    }

    #[test]
    fn disjoint_boxes_survive_and_clusters_count() {
        let c = nms_clusters(&[det(0, 0, 0.5), det(1, 1, 0.9), det(50, 50, 0.1)], 0.3);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].winner, det(1, 1, 0.9));
        assert_eq!(c[0].merged, 2);
        assert_eq!(c[1].merged, 1);
    }
}
