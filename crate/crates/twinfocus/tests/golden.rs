use std::path::Path;

use twinfocus::formats::encode_cmx;
use twinfocus::medium::{load_matrix, make_medium, save_matrix, MediumKind, MediumSpec};
use twinfocus::state::ModeGrid;

const GOLDEN: &str = "tests/data/iid_complex_seed7_2x3.cmx";

#[test]
fn iid_medium_matches_the_recorded_bytes() {
    let grid = ModeGrid::new(1, 3, 296e-6).unwrap();
    let t = make_medium(&MediumSpec::new(MediumKind::IidComplex, 7), (2, 1), &grid).unwrap();
    let bytes = encode_cmx(&t.t);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("TWINFOCUS_RECORD_GOLDEN").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    assert_eq!(bytes, std::fs::read(&path).unwrap());

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("m.cmx");
    save_matrix(&t, &file).unwrap();
    assert_eq!(encode_cmx(&load_matrix(&file).unwrap().t), bytes);
}
