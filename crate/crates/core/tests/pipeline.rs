mod common;

use std::fs;
use std::path::{Path, PathBuf};

use coastal_slr::fixture::FjordFixture;
use coastal_slr::inundation::{read_stats_csv, WET};
use coastal_slr::pipeline::catalog::LayerKind;
use coastal_slr::pipeline::{
    mask_path, run_pipeline, verify_catalog, Pipeline, PipelineConfig, Stage, CATALOG_FILE,
    EFFECTIVE_CONFIG_FILE,
};
use coastal_slr::raster::{read_class_grid, GridFormat};
use coastal_slr::{Error, ErrorKind};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fjord")
}

fn fixture_config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::load(&fixture_dir().join("config.json")).expect("fixture config loads");
    c.output_dir = out.to_path_buf();
    c
}

fn minimal_config(dir: &Path) -> serde_json::Value {
    let f = FjordFixture::generate(1).unwrap();
    f.write(dir).unwrap();
    serde_json::json!({
        "dem": "dem.asc",
        "coastline": "coastline.geojson",
        "lulc": { "t1": "lulc_1991.asc", "t2": "lulc_2006.asc", "current": "lulc_2021.asc" },
        "drivers": {
            "rivers": "rivers.asc",
            "disturbance": "disturbance.asc",
            "roads": "roads.geojson",
            "urban": "urban.asc"
        }
    })
}

fn load_value(dir: &Path, v: &serde_json::Value) -> coastal_slr::Result<PipelineConfig> {
    let path = dir.join("test_config.json");
    fs::write(&path, v.to_string()).unwrap();
    PipelineConfig::load(&path)
}

fn config_key(e: Error) -> String {
    match e {
        Error::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn minimal_config_gets_default_heights() {
    let tmp = tempfile::tempdir().unwrap();
    let c = load_value(tmp.path(), &minimal_config(tmp.path())).unwrap();
    assert_eq!(c.heights, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(c.transition_threshold, 5000);
    assert_eq!(c.mlp.samples_per_class, 6014);
    assert_eq!((c.years.t1, c.years.t2, c.years.t3), (1991, 2006, 2011));
    let targets: Vec<(i32, f64)> = c.projection_targets.iter().map(|t| (t.year, t.slr_m)).collect();
    assert_eq!(targets, vec![(2100, 1.0), (2200, 2.0), (2300, 4.0)]);
    assert!(c.dem.is_absolute());
    assert_eq!(c.output_dir, tmp.path().join("out"));
}

#[test]
fn descending_heights_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal_config(tmp.path());
    v["heights"] = serde_json::json!([2.0, 1.0]);
    let e = load_value(tmp.path(), &v).unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Config);
    assert_eq!(config_key(e), "heights[1]");
}

#[test]
fn dangling_path_names_the_key_and_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal_config(tmp.path());
    v["dem"] = serde_json::json!("missing/dem.asc");
    let e = load_value(tmp.path(), &v).unwrap_err();
    let text = e.to_string();
    assert!(text.contains("missing/dem.asc"), "{text}");
    assert_eq!(config_key(e), "dem");
}

#[test]
fn unknown_keys_report_their_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal_config(tmp.path());
    v["mlp"] = serde_json::json!({ "hidden": 9 });
    let e = load_value(tmp.path(), &v).unwrap_err();
    assert_eq!(config_key(e), "mlp.hidden");
    let mut v = minimal_config(tmp.path());
    v["colour"] = serde_json::json!("red");
    let e = load_value(tmp.path(), &v).unwrap_err();
    assert!(e.to_string().contains("colour"), "{e}");
}

#[test]
fn projection_target_must_be_a_scenario_height() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal_config(tmp.path());
    v["projection_targets"] = serde_json::json!([{ "year": 2100, "slr_m": 1.5 }]);
    let e = load_value(tmp.path(), &v).unwrap_err();
    assert_eq!(config_key(e), "projection_targets[0].slr_m");
}

#[test]
fn current_map_or_classification_is_required() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal_config(tmp.path());
    v["lulc"].as_object_mut().unwrap().remove("current");
    let e = load_value(tmp.path(), &v).unwrap_err();
    assert_eq!(config_key(e), "lulc.current");
}

#[test]
fn committed_fixture_matches_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    FjordFixture::generate(1).unwrap().write(tmp.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let fresh = fs::read(tmp.path().join(&name)).unwrap();
        let committed = fs::read(fixture_dir().join(&name))
            .unwrap_or_else(|_| panic!("{name:?} is missing from the committed fixture"));
        assert!(fresh == committed, "{name:?} differs from the generator output");
    }
}

#[test]
fn fixture_run_is_cached_and_repairs_damage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = fixture_config(&out);
    let report = run_pipeline(&config).unwrap();
    let expected: Vec<Stage> = Stage::ALL.to_vec();
    assert_eq!(report.executed, expected);
    assert!(report.skipped.is_empty());
    assert!(out.join(EFFECTIVE_CONFIG_FILE).is_file());
    let catalog = verify_catalog(&report.catalog.clone().unwrap()).unwrap();

    // Seven layers: four scenarios, current land cover, boundary, POIs.
    let kinds: Vec<LayerKind> = catalog.layers.iter().map(|l| l.kind).collect();
    assert_eq!(catalog.layers.len(), 7);
    assert_eq!(kinds.iter().filter(|&&k| k == LayerKind::RasterOverlay).count(), 5);
    assert_eq!(catalog.layer("pois").unwrap().kind, LayerKind::Points);
    assert_eq!(catalog.layer("boundary").unwrap().kind, LayerKind::Vector);
    for l in &catalog.layers {
        assert!((0.0..=1.0).contains(&l.style.opacity));
    }

    let again = run_pipeline(&config).unwrap();
    assert!(again.executed.is_empty(), "re-run executed {:?}", again.executed);
    assert_eq!(again.skipped, expected);

    // Damage one mask: only its stage re-runs, and it restores identical bytes.
    let mask = out.join(mask_path(2.0));
    let original = fs::read(&mask).unwrap();
    fs::write(&mask, b"garbage").unwrap();
    let repaired = run_pipeline(&config).unwrap();
    assert_eq!(repaired.executed, vec![Stage::Scenarios]);
    assert_eq!(fs::read(&mask).unwrap(), original);
    verify_catalog(&out.join(CATALOG_FILE)).unwrap();
}

#[test]
fn stats_match_the_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut p = Pipeline::new(fixture_config(&out)).unwrap();
    p.run(Stage::Stats).unwrap();
    assert_eq!(p.report().executed, vec![Stage::Ingest, Stage::Scenarios, Stage::Stats]);
    let study = read_class_grid(&out.join("ingest/study_area.asc"), GridFormat::EsriAscii).unwrap();
    let study_cells = study.cells().iter().filter(|&&v| v == 1).count() as f64;
    let stats = read_stats_csv(&out.join("stats/scenario_stats.csv")).unwrap();
    assert_eq!(stats.len(), 4);
    for s in stats {
        let mask = read_class_grid(&out.join(mask_path(s.height_m)), GridFormat::EsriAscii).unwrap();
        let wet = mask
            .cells()
            .iter()
            .zip(study.cells())
            .filter(|&(&m, &a)| m == WET && a == 1)
            .count();
        assert_eq!(s.inundated_cells as usize, wet);
        let area = wet as f64 * 100.0 / 1e6;
        assert!((s.area_km2 - area).abs() <= 1e-12 * area.max(1.0));
        let pct = 100.0 * area / (study_cells * 100.0 / 1e6);
        assert!((s.pct_of_study_area - pct).abs() <= 1e-12 * pct.max(1.0));
    }
}

#[test]
fn disabled_stage_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = fixture_config(&tmp.path().join("out"));
    c.lulc.t3 = None;
    let mut p = Pipeline::new(c).unwrap();
    let e = p.run(Stage::Validation).unwrap_err();
    assert_eq!(config_key(e), "lulc.t3");
}

#[test]
fn unreachable_threshold_fails_in_the_change_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = fixture_config(&tmp.path().join("out"));
    c.transition_threshold = u64::MAX;
    let mut p = Pipeline::new(c).unwrap();
    match p.run(Stage::Mlp).unwrap_err() {
        Error::Stage { stage, source } => {
            assert_eq!(stage, "change");
            assert!(matches!(*source, Error::NoTransitions));
        }
        other => panic!("unexpected {other}"),
    }
}
