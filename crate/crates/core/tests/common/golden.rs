//! Fixture goldens: the oracle checks that justify them and the digest that
//! gets committed.

use std::path::{Path, PathBuf};

use coastal_slr::inundation::{read_stats_csv, WET};
use coastal_slr::pipeline::cache::sha256_file;
use coastal_slr::pipeline::{PipelineConfig, CATALOG_FILE};
use coastal_slr::raster::{read_class_grid, read_float_grid, GridFormat};
use serde_json::{json, Value};

pub const HEIGHTS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fjord")
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fjord.json")
}

pub fn fixture_config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::load(&fixture_dir().join("config.json")).unwrap();
    c.output_dir = out.to_path_buf();
    c
}

fn mask_file(h: f64) -> String {
    format!("scenarios/mask_{h}m.asc")
}

/// Even-odd test over every ring of every polygon in a GeoJSON layer.
fn inside(layer: &Value, x: f64, y: f64) -> bool {
    let mut hit = false;
    for f in layer["features"].as_array().unwrap() {
        let g = &f["geometry"];
        let polys: Vec<&Value> = match g["type"].as_str().unwrap() {
            "Polygon" => vec![&g["coordinates"]],
            "MultiPolygon" => g["coordinates"].as_array().unwrap().iter().collect(),
            _ => continue,
        };
        for poly in polys {
            for ring in poly.as_array().unwrap() {
                let pts: Vec<(f64, f64)> = ring
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
                    .collect();
                for w in pts.windows(2) {
                    let ((x1, y1), (x2, y2)) = (w[0], w[1]);
                    if (y1 > y) != (y2 > y) && x < x1 + (y - y1) * (x2 - x1) / (y2 - y1) {
                        hit = !hit;
                    }
                }
            }
        }
    }
    hit
}

/// Rebuild each mask from the raw fixture inputs by point-in-polygon
/// clipping, thresholding and breadth-first flooding from the clipped-away
/// cells that touch land, then compare with the run's mask files and stats.
pub fn check_against_oracles(out: &Path) -> Result<(), String> {
    let dir = fixture_dir();
    let dem = read_float_grid(&dir.join("dem.asc"), GridFormat::EsriAscii).map_err(|e| e.to_string())?;
    let coast: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("coastline.geojson")).unwrap()).unwrap();
    let boundary: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("boundary.geojson")).unwrap()).unwrap();
    let h = dem.header().clone();
    let (nc, nr) = (h.ncols, h.nrows);
    let z: Vec<Option<f64>> = (0..h.len())
        .map(|i| {
            let (x, y) = h.cell_center(i / nc, i % nc);
            dem.value(i).filter(|_| inside(&coast, x, y))
        })
        .collect();
    let seeds: Vec<bool> = (0..h.len())
        .map(|i| {
            let (r, c) = (i / nc, i % nc);
            dem.value(i).is_some()
                && z[i].is_none()
                && [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dr, dc)| {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    rr >= 0 && cc >= 0 && rr < nr as i64 && cc < nc as i64 && z[rr as usize * nc + cc as usize].is_some()
                })
        })
        .collect();
    let study: Vec<bool> = (0..h.len())
        .map(|i| {
            let (x, y) = h.cell_center(i / nc, i % nc);
            z[i].is_some() && inside(&boundary, x, y)
        })
        .collect();
    let study_cells = study.iter().filter(|&&s| s).count() as f64;
    let stats = read_stats_csv(&out.join("stats/scenario_stats.csv")).map_err(|e| e.to_string())?;
    for (k, &height) in HEIGHTS.iter().enumerate() {
        let wet: Vec<bool> = z.iter().map(|v| v.is_some_and(|v| v <= height)).collect();
        let oracle = super::bfs_connect(&wet, &seeds, nc, nr, false);
        let mask = read_class_grid(&out.join(mask_file(height)), GridFormat::EsriAscii).map_err(|e| e.to_string())?;
        let got: Vec<bool> = mask.cells().iter().map(|&v| v == WET).collect();
        let diff = got.iter().zip(&oracle).filter(|(a, b)| a != b).count();
        if diff != 0 {
            return Err(format!("{height} m mask differs from the flood-fill oracle in {diff} cells"));
        }
        let in_study = (0..h.len()).filter(|&i| oracle[i] && study[i]).count();
        let s = &stats[k];
        let area = in_study as f64 * h.cell_area() / 1e6;
        let pct = 100.0 * in_study as f64 / study_cells;
        if s.inundated_cells as usize != in_study
            || (s.area_km2 - area).abs() > 1e-12 * area.max(1.0)
            || (s.pct_of_study_area - pct).abs() > 1e-12 * pct.max(1.0)
        {
            return Err(format!("{height} m stats {s:?} disagree with {in_study} cells / {pct}%"));
        }
    }
    Ok(())
}

/// What the committed golden file records about a fixture run.
pub fn digest(out: &Path) -> Value {
    let sha = |rel: &str| sha256_file(&out.join(rel)).unwrap();
    let masks: Vec<Value> = HEIGHTS
        .iter()
        .map(|&h| {
            let mask = read_class_grid(&out.join(mask_file(h)), GridFormat::EsriAscii).unwrap();
            json!({ "height_m": h, "wet_cells": mask.count_of(WET), "sha256": sha(&mask_file(h)) })
        })
        .collect();
    let counts = std::fs::read_to_string(out.join("validation/validation_counts.csv")).unwrap();
    json!({
        "masks": masks,
        "scenario_stats_sha256": sha("stats/scenario_stats.csv"),
        "validation_counts": counts,
        "catalog_sha256": sha(CATALOG_FILE),
    })
}
