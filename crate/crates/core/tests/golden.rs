mod common;

use common::golden::{check_against_oracles, digest, fixture_config, golden_path};
use coastal_slr::pipeline::run_pipeline;

/// Rewrites the committed goldens, but only after the run passes the oracles.
#[test]
#[ignore = "run explicitly to regenerate tests/golden/fjord.json"]
fn regenerate_fixture_goldens() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&fixture_config(tmp.path())).unwrap();
    check_against_oracles(tmp.path()).unwrap();
    let text = serde_json::to_string_pretty(&digest(tmp.path())).unwrap() + "\n";
    std::fs::write(golden_path(), text).unwrap();
}

#[test]
fn fixture_run_matches_goldens() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&fixture_config(tmp.path())).unwrap();
    check_against_oracles(tmp.path()).unwrap();
    let golden: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(golden_path()).unwrap()).unwrap();
    assert_eq!(digest(tmp.path()), golden);
}
