//! Regenerates the demo detector models under `models/`.
//!
//! cargo run -p vigil-core --example write_demo_models

use std::path::Path;

use vigil_core::detect::synthetic::{frontal_face_cascade, person_model};
use vigil_core::detect::{write_cascade, write_hog};

const FACE_COMMENT: &str = "demo frontal face cascade built from the synthetic face prototype";
const PERSON_COMMENT: &str = "demo person model built from the synthetic figure prototype";

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("frontal_face.haar"), write_cascade(&frontal_face_cascade(), FACE_COMMENT))?;
    std::fs::write(dir.join("person.hog"), write_hog(&person_model(), PERSON_COMMENT))?;
    println!("wrote {}", dir.display());
    Ok(())
}
