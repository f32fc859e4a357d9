//! Independent reference implementations and the randomized suites that
//! compare the library against them. Shared by the per-module tests and the
//! acceptance target; each suite returns the number of cases it checked.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vigil_core::bgsub::{connected_components, BinaryMask, Blob};
use vigil_core::detect::{hog_descriptor, nms, Detection, IntegralImage, DESCRIPTOR_LEN};
use vigil_core::model::{decode_frame, encode_frame, BBox, Descriptor, Feature, Frame};
use vigil_core::runtime::{AckerState, Origin, Payload, SpoutRef, TupleEnvelope, TupleIdGen};
use vigil_core::sink::{pack_chunk, unpack_chunk};

pub type SuiteResult = Result<usize, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<u8> {
    (0..w * h).map(|_| rng.gen()).collect()
}

// ---- integral image ----

pub fn naive_rect_sum(img: &[u8], width: u32, x: u32, y: u32, w: u32, h: u32) -> i64 {
    let mut sum = 0i64;
    for yy in y..y + h {
        for xx in x..x + w {
            sum += i64::from(img[(yy * width + xx) as usize]);
        }
    }
    sum
}

/// 100 random images, 50 random rectangles each, plus monotonicity of the table.
pub fn integral_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let img = random_image(&mut rng, w, h);
        let ii = IntegralImage::new(&img, w, h);
        for x in 0..w {
            for y in 0..h {
                ensure!(ii.at(x + 1, y) >= ii.at(x, y) && ii.at(x, y + 1) >= ii.at(x, y), "table not monotone");
            }
        }
        for _ in 0..50 {
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let (rw, rh) = (rng.gen_range(0..=w - x), rng.gen_range(0..=h - y));
            let want = naive_rect_sum(&img, w, x, y, rw, rh);
            let got = ii.rect_sum(x, y, rw, rh);
            ensure!(got == want, "rect ({x},{y},{rw},{rh}) of {w}x{h}: {got} vs {want}");
            cases += 1;
        }
    }
    Ok(cases)
}

// ---- connected components ----

/// Breadth-first flood fill over 8 neighbours, one seed per unvisited pixel.
pub fn flood_fill_blobs(mask: &BinaryMask) -> Vec<Blob> {
    let (w, h) = (i64::from(mask.width), i64::from(mask.height));
    let mut seen = vec![false; (w * h) as usize];
    let mut blobs = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let i = (sy * w + sx) as usize;
            if mask.data[i] == 0 || seen[i] {
                continue;
            }
            seen[i] = true;
            let mut queue = VecDeque::from([(sx, sy)]);
            let (mut area, mut x0, mut y0, mut x1, mut y1) = (0u64, sx, sy, sx, sy);
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if mask.data[j] != 0 && !seen[j] {
                            seen[j] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            let bbox = BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32);
            blobs.push(Blob { area, bbox });
        }
    }
    blobs.sort_by_key(|b| (b.bbox.y, b.bbox.x, b.bbox.w, b.bbox.h, b.area));
    blobs
}

pub fn components_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..300 {
        let (width, height) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let density: f64 = rng.gen_range(0.05..0.7);
        let data = (0..width * height).map(|_| if rng.gen_bool(density) { 255 } else { 0 }).collect();
        let mask = BinaryMask { width, height, data };
        let got = connected_components(&mask);
        ensure!(got == flood_fill_blobs(&mask), "case {case}: {width}x{height} mask differs from flood fill");
        let total: u64 = got.iter().map(|b| b.area).sum();
        ensure!(total == mask.foreground_count() as u64, "case {case}: areas do not cover the mask");
    }
    Ok(300)
}

// ---- HOG ----

/// Straightforward per-window HOG: per-pixel loops, no shared tables.
pub fn naive_hog(win: &[u8]) -> Vec<f64> {
    let (w, h) = (64i64, 128i64);
    let px = |x: i64, y: i64| f64::from(win[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize]);
    let mut cells = vec![[0.0f64; 9]; 8 * 16];
    for y in 0..h {
        for x in 0..w {
            let gx = px(x + 1, y) - px(x - 1, y);
            let gy = px(x, y + 1) - px(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx).to_degrees();
            while theta < 0.0 {
                theta += 180.0;
            }
            while theta >= 180.0 {
                theta -= 180.0;
            }
            // centres at 10, 30, ..., 170
            let mut lo = ((theta - 10.0) / 20.0).floor() as i64;
            let centre = 10.0 + 20.0 * lo as f64;
            let t = (theta - centre) / 20.0;
            let hi = (lo + 1).rem_euclid(9);
            lo = lo.rem_euclid(9);
            let cell = &mut cells[((y / 8) * 8 + x / 8) as usize];
            cell[lo as usize] += mag * (1.0 - t);
            cell[hi as usize] += mag * t;
        }
    }
    let mut out = Vec::new();
    for by in 0..15 {
        for bx in 0..7 {
            let mut v: Vec<f64> = Vec::new();
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                v.extend(cells[(by + dy) * 8 + bx + dx]);
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt() + 1e-6;
            let mut v: Vec<f64> = v.iter().map(|a| (a / n).min(0.2)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt() + 1e-6;
            v.iter_mut().for_each(|a| *a /= n);
            out.extend(v);
        }
    }
    out
}

/// Random and smooth windows alike, every element within 1e-6.
pub fn hog_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..120 {
        let win: Vec<u8> = if case % 2 == 0 {
            random_image(&mut rng, 64, 128)
        } else {
            // smooth structure so bins other than noise-dominated ones matter
            let (a, b) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5));
            (0..64 * 128).map(|i| (128.0 + 100.0 * ((i % 64) as f64 * a + (i / 64) as f64 * b).sin()) as u8).collect()
        };
        let fast = hog_descriptor(&win, 64, 128).map_err(|e| e.to_string())?;
        let slow = naive_hog(&win);
        ensure!(fast.len() == DESCRIPTOR_LEN, "descriptor length {}", fast.len());
        for (i, (a, b)) in fast.iter().zip(&slow).enumerate() {
            ensure!((a - b).abs() <= 1e-6, "case {case} element {i}: {a} vs {b}");
        }
    }
    Ok(120)
}

// ---- NMS ----

pub fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| Detection {
            bbox: BBox::new(rng.gen_range(0..60), rng.gen_range(0..60), rng.gen_range(5..40), rng.gen_range(5..40)),
            score: f64::from(rng.gen_range(0..8)) / 4.0,
        })
        .collect()
}

/// Kept boxes overlap at most `thr`; every discarded box is suppressed by a
/// kept box that outranks it; the result ignores input order.
pub fn nms_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..200 {
        let n = rng.gen_range(0..25);
        let boxes = random_boxes(&mut rng, n);
        let thr = rng.gen_range(0.1..0.9);
        let kept = nms(&boxes, thr);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                ensure!(a.bbox.iou(&b.bbox) <= thr, "case {case}: kept boxes overlap");
            }
        }
        let mut remaining = boxes.clone();
        for k in &kept {
            let pos = remaining.iter().position(|d| d == k).ok_or(format!("case {case}: invented box {k:?}"))?;
            remaining.swap_remove(pos);
        }
        for d in &remaining {
            let suppressed = kept.iter().any(|k| {
                k.bbox.iou(&d.bbox) > thr && (k.score > d.score || (k.score == d.score && k.bbox <= d.bbox))
            });
            ensure!(suppressed, "case {case}: discarded {d:?} has no conflicting kept box");
        }
        let mut shuffled = boxes.clone();
        shuffled.shuffle(&mut rng);
        ensure!(nms(&shuffled, thr) == kept, "case {case}: result depends on input order");
    }
    Ok(200)
}

// ---- acking ----

const SPOUT: SpoutRef = SpoutRef { node: 0, instance: 0 };

/// Processes a random tuple tree in random order. Each processed tuple may
/// emit children anchored to it (sometimes to a sibling as well) before it
/// is acked. The root must complete exactly at the final ack.
fn run_tree(rng: &mut ChaCha8Rng, ids: &mut TupleIdGen, acker: &mut AckerState) -> Result<(), String> {
    let root = ids.next_id();
    acker.open_root(root, SPOUT, 7, 1_000).map_err(|e| e.to_string())?;
    let spout = |acker: &mut AckerState, ids: &mut TupleIdGen| {
        acker.emit(ids, Origin::Spout { root_id: root }, "s", Payload::default()).map_err(|e| e.to_string())
    };
    let mut live: Vec<TupleEnvelope> = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        live.push(spout(acker, ids)?);
    }
    let mut budget = rng.gen_range(0..40);
    while !live.is_empty() {
        ensure!(acker.entry(root).is_some(), "root completed while tuples were still live");
        let current = live.swap_remove(rng.gen_range(0..live.len()));
        let children = if budget > 0 { rng.gen_range(0..=3.min(budget)) } else { 0 };
        budget -= children;
        for _ in 0..children {
            let child = if !live.is_empty() && rng.gen_bool(0.3) {
                let other = live.choose(rng).expect("nonempty").clone();
                acker.emit(ids, Origin::Anchored(&[&current, &other]), "t", Payload::default())
            } else {
                acker.emit(ids, Origin::Anchored(&[&current]), "t", Payload::default())
            };
            live.push(child.map_err(|e| e.to_string())?);
        }
        let done = acker.ack(current.tuple_id, root).map_err(|e| e.to_string())?;
        ensure!(done == live.is_empty(), "completion did not coincide with the last ack");
    }
    ensure!(acker.entry(root).is_none(), "completed root still tracked");
    Ok(())
}

pub fn acker_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = TupleIdGen::new(seed ^ 0x5eed);
    let mut acker = AckerState::new();
    for case in 0..1500 {
        run_tree(&mut rng, &mut ids, &mut acker).map_err(|e| format!("tree {case}: {e}"))?;
    }
    ensure!(acker.pending() == 0, "{} roots left pending", acker.pending());
    Ok(1500)
}

// ---- containers ----

pub fn random_frame(rng: &mut ChaCha8Rng, seq: u64, dims: Option<(u32, u32, u8)>) -> Frame {
    let (w, h, c) = dims.unwrap_or((rng.gen_range(1..40), rng.gen_range(1..30), if rng.gen() { 3 } else { 1 }));
    let pixels = (0..w * h * u32::from(c)).map(|_| rng.gen()).collect();
    let id: String = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    let mut frame = Frame::new(id, seq, rng.gen_range(-1_000..1_000_000), w, h, c, pixels).expect("valid frame");
    for name in ["face", "person"].iter().take(rng.gen_range(0..3)) {
        let descriptors = (0..rng.gen_range(0..4))
            .map(|_| {
                let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
                Descriptor {
                    bbox: BBox::new(x, y, rng.gen_range(1..=w - x), rng.gen_range(1..=h - y)),
                    label: name.to_string(),
                    confidence: rng.gen(),
                }
            })
            .collect();
        frame.features.push(Feature::new(*name, descriptors));
    }
    frame
}

pub fn frame_roundtrip_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for seq in 0..200 {
        let frame = random_frame(&mut rng, seq, None);
        let bytes = encode_frame(&frame).map_err(|e| e.to_string())?;
        let back = decode_frame(&bytes).map_err(|e| e.to_string())?;
        ensure!(back == frame, "frame {seq} changed in the round trip");
        ensure!(encode_frame(&back).map_err(|e| e.to_string())? == bytes, "frame {seq} re-encodes differently");
    }
    Ok(200)
}

pub fn chunk_roundtrip_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..120 {
        let dims = (rng.gen_range(1..24), rng.gen_range(1..24), if rng.gen() { 3 } else { 1 });
        let mut seq = rng.gen_range(0..1000);
        let frames: Vec<Frame> = (0..rng.gen_range(1..12))
            .map(|_| {
                seq += rng.gen_range(1..4);
                random_frame(&mut rng, seq, Some(dims))
            })
            .collect();
        let fps = rng.gen_range(1.0..60.0);
        let bytes = pack_chunk(&frames, fps).map_err(|e| e.to_string())?;
        let chunk = unpack_chunk(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(chunk.frames == frames, "case {case}: frames changed");
        ensure!(chunk.fps.to_bits() == fps.to_bits(), "case {case}: fps changed");
        ensure!(pack_chunk(&chunk.frames, chunk.fps).map_err(|e| e.to_string())? == bytes, "case {case}: repack differs");
    }
    Ok(120)
}
