use std::path::PathBuf;

use vigil_core::detect::synthetic::{frontal_face_cascade, person_model};
use vigil_core::detect::{load_cascade, load_hog};

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

// The checked-in files must match what the example writes; rerun
// `cargo run -p vigil-core --example write_demo_models` after changing the prototypes.
#[test]
fn checked_in_models_match_generators() {
    assert_eq!(load_cascade(&models_dir().join("frontal_face.haar")).unwrap(), frontal_face_cascade());
    assert_eq!(load_hog(&models_dir().join("person.hog")).unwrap(), person_model());
}
