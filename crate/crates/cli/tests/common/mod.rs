//! Synthetic camera scenes and run helpers shared by the cli tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vigil::config::PipelineConfig;
use vigil_core::detect::synthetic::{face_prototype, person_prototype, FACE_BASE, SKIN};
use vigil_core::netpbm::encode_pgm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actor {
    /// A flat block of the given size and brightness.
    Block { w: u32, h: u32, value: u8 },
    /// A frontal face prototype centred on a skin-coloured patch.
    Face,
    /// The pedestrian prototype on its backdrop.
    Person,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub start: u64,
    pub actor: Actor,
    /// One top-left position per frame of the episode.
    pub positions: Vec<(u32, u32)>,
}

/// A static per-pixel background with fresh noise on every frame, visited
/// by actors for a few frames at a time.
#[derive(Debug, Clone)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub noise: i16,
    pub seed: u64,
    background: Vec<u8>,
    pub episodes: Vec<Episode>,
}

pub const FACE_PATCH: u32 = 56;

impl Scene {
    pub fn new(width: u32, height: u32, frames: u64, noise: i16, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let background = (0..width * height).map(|_| rng.gen_range(90..=110)).collect();
        Scene { width, height, frames, noise, seed, background, episodes: Vec::new() }
    }

    /// 2000 frames of 320×240. Sixty five-frame episodes of a 128×90 block
    /// (15% of the frame) sweep left to right; episode `e` starts at frame
    /// 33e+10, so exactly 300 frames show motion.
    pub fn storage_reduction() -> Self {
        let mut scene = Scene::new(320, 240, 2000, 5, 1);
        for e in 0..60u64 {
            let y = 20 + (e % 7) as u32 * 18;
            scene.episodes.push(Episode {
                start: 33 * e + 10,
                actor: Actor::Block { w: 128, h: 90, value: 180 },
                positions: (0..5).map(|k| (48 * k, y)).collect(),
            });
        }
        scene
    }

    /// A 160×160 scene cycling through blocks, faces and pedestrians.
    pub fn mixed(frames: u64, seed: u64) -> Self {
        let mut scene = Scene::new(160, 160, frames, 5, seed);
        let mut start = 6;
        let mut kind = 0;
        while start + 4 < frames {
            let (actor, positions) = match kind % 3 {
                0 => (Actor::Block { w: 60, h: 60, value: 200 }, (0..4).map(|k| (20 + 20 * k, 50)).collect()),
                1 => (Actor::Face, (0..4).map(|k| (16 + 16 * k, 40)).collect()),
                _ => (Actor::Person, (0..4).map(|k| (16 + 16 * k, 16)).collect()),
            };
            scene.episodes.push(Episode { start, actor, positions });
            start += 30;
            kind += 1;
        }
        scene
    }

    /// Frames in which some actor is visible.
    pub fn active_frames(&self) -> BTreeSet<u64> {
        self.episodes.iter().flat_map(|e| e.start..e.start + e.positions.len() as u64).collect()
    }

    pub fn render(&self, index: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(1_000_003).wrapping_add(index));
        let mut img: Vec<u8> = self
            .background
            .iter()
            .map(|&b| (i16::from(b) + rng.gen_range(-self.noise..=self.noise)).clamp(0, 255) as u8)
            .collect();
        for e in &self.episodes {
            if index < e.start || index >= e.start + e.positions.len() as u64 {
                continue;
            }
            let (x, y) = e.positions[(index - e.start) as usize];
            match e.actor {
                Actor::Block { w, h, value } => self.paste(&mut img, &vec![value; (w * h) as usize], w, x, y),
                Actor::Face => {
                    self.paste(&mut img, &vec![SKIN; (FACE_PATCH * FACE_PATCH) as usize], FACE_PATCH, x, y);
                    let offset = (FACE_PATCH - FACE_BASE) / 2;
                    self.paste(&mut img, &face_prototype(true), FACE_BASE, x + offset, y + offset);
                }
                Actor::Person => self.paste(&mut img, &person_prototype(), 64, x, y),
            }
        }
        img
    }

    fn paste(&self, img: &mut [u8], src: &[u8], src_w: u32, x: u32, y: u32) {
        for (row, line) in src.chunks(src_w as usize).enumerate() {
            let start = (y as usize + row) * self.width as usize + x as usize;
            img[start..start + line.len()].copy_from_slice(line);
        }
    }

    /// Writes `frame_000000.pgm`, `frame_000001.pgm`, ... into `dir`.
    pub fn write_dir(&self, dir: &Path) {
        std::fs::create_dir_all(dir).unwrap();
        for i in 0..self.frames {
            let bytes = encode_pgm(self.width, self.height, &self.render(i), &[]);
            std::fs::write(dir.join(format!("frame_{i:06}.pgm")), bytes).unwrap();
        }
    }
}

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

/// Writes a config for `frames` → `out` into `dir/<name>.json` and returns its path.
pub fn write_config(dir: &Path, name: &str, frames: &Path, out: &Path, edit: impl FnOnce(&mut PipelineConfig)) -> PathBuf {
    let mut cfg = PipelineConfig::default();
    cfg.source.path = frames.to_path_buf();
    cfg.sink.out_root = out.to_path_buf();
    cfg.face_model_path = models_dir().join("frontal_face.haar");
    cfg.person_model_path = models_dir().join("person.hog");
    edit(&mut cfg);
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

/// Every file below `root` except the run report, keyed by relative path.
pub fn output_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().is_some_and(|n| n != vigil::commands::REPORT_FILE) {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Files of one category folder, keyed by name.
pub fn folder_files(root: &Path, folder: &str) -> BTreeMap<PathBuf, Vec<u8>> {
    output_files(&root.join(folder))
}
