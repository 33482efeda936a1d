use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

use coastal_slr::geoservice::render::{downsample_factor, render_classes, render_mask, OverlayBounds};
use coastal_slr::geoservice::{router, PointQuery, ServiceState};
use coastal_slr::inundation::{mask_legend, read_stats_csv, WET};
use coastal_slr::pipeline::{run_pipeline, PipelineConfig, CATALOG_FILE};
use coastal_slr::raster::{read_class_grid, read_float_grid, ClassGrid, GridFormat, GridHeader, Rgba};

const ASC: GridFormat = GridFormat::EsriAscii;

/// One fresh fixture run shared by every test in this file.
fn catalog_path() -> &'static Path {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("geoservice_fixture");
        let _ = std::fs::remove_dir_all(&out);
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fjord");
        let mut config = PipelineConfig::load(&dir.join("config.json")).unwrap();
        config.output_dir = out;
        run_pipeline(&config).unwrap().catalog.unwrap()
    })
}

fn state() -> Arc<ServiceState> {
    static STATE: OnceLock<Arc<ServiceState>> = OnceLock::new();
    STATE.get_or_init(|| Arc::new(ServiceState::load(catalog_path()).unwrap())).clone()
}

fn out_dir() -> &'static Path {
    catalog_path().parent().unwrap()
}

async fn get_with(uri: &str, headers: &[(&str, &str)]) -> (StatusCode, HeaderMap, Bytes) {
    let mut req = Request::get(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let res = router(state()).oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    let (parts, body) = res.into_parts();
    (parts.status, parts.headers, body.collect().await.unwrap().to_bytes())
}

async fn get(uri: &str) -> (StatusCode, HeaderMap, Bytes) {
    get_with(uri, &[]).await
}

async fn get_json(uri: &str) -> Value {
    let (status, _, body) = get(uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn decode_png(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!(info.color_type, png::ColorType::Rgba);
    buf.truncate(info.buffer_size());
    (info.width as usize, info.height as usize, buf)
}

fn content_type(h: &HeaderMap) -> &str {
    h.get(header::CONTENT_TYPE).unwrap().to_str().unwrap()
}

#[tokio::test]
async fn catalog_lists_the_fixture_layers_with_an_etag() {
    let (status, headers, body) = get("/api/catalog").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, std::fs::read(catalog_path()).unwrap());
    let etag = headers.get(header::ETAG).unwrap().to_str().unwrap().to_string();
    assert_eq!(headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(), "*");

    let v: Value = serde_json::from_slice(&body).unwrap();
    let ids: Vec<&str> = v["layers"].as_array().unwrap().iter().map(|l| l["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["slr_1m", "slr_2m", "slr_3m", "slr_4m", "lulc_2021", "boundary", "pois"]);

    let (_, again, body2) = get("/api/catalog").await;
    assert_eq!(body2, body);
    assert_eq!(again.get(header::ETAG).unwrap().to_str().unwrap(), etag);

    let (status, h, body) = get_with("/api/catalog", &[("if-none-match", &etag)]).await;
    assert_eq!(status, StatusCode::NOT_MODIFIED);
    assert!(body.is_empty());
    assert_eq!(h.get(header::ETAG).unwrap().to_str().unwrap(), etag);
    let (status, _, _) = get_with("/api/catalog", &[("if-none-match", "\"stale\"")]).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn overlay_pixels_match_the_mask() {
    for h in [1.0, 2.0, 3.0, 4.0] {
        let (status, headers, body) = get(&format!("/api/scenario/{h}/overlay.png")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(content_type(&headers), "image/png");
        let mask = read_class_grid(&out_dir().join(format!("scenarios/mask_{h}m.asc")), ASC).unwrap();
        let (w, hh, px) = decode_png(&body);
        assert_eq!((w, hh), (256, 256));
        let mut opaque = 0;
        for (i, p) in px.chunks_exact(4).enumerate() {
            let wet = mask.cells()[i] == WET;
            if wet {
                // #1f5fbf at 0.6 opacity, straight alpha.
                assert_eq!(p, [0x1f, 0x5f, 0xbf, 153]);
                opaque += 1;
            } else {
                assert_eq!(p[3], 0);
            }
        }
        assert_eq!(opaque, mask.count_of(WET));
    }
}

#[tokio::test]
async fn overlay_bounds_place_the_image_on_the_grid() {
    let b: OverlayBounds = serde_json::from_value(get_json("/api/scenario/4/bounds").await).unwrap();
    assert_eq!((b.width, b.height, b.factor), (256, 256, 1));
    let tm = state().projection().clone();
    let e = state().catalog().grid.extent();
    assert_eq!(b.projected, e);
    for ([lon, lat], (x, y)) in [
        (b.top_left, (e.min_x, e.max_y)),
        (b.top_right, (e.max_x, e.max_y)),
        (b.bottom_right, (e.max_x, e.min_y)),
        (b.bottom_left, (e.min_x, e.min_y)),
    ] {
        assert!(b.geographic.contains(lon, lat));
        let (px, py) = tm.forward(lon, lat);
        assert!((px - x).hypot(py - y) < 1e-3, "corner off by {}", (px - x).hypot(py - y));
    }
}

#[tokio::test]
async fn unknown_heights_years_and_paths_are_404() {
    for uri in [
        "/api/scenario/9/overlay.png",
        "/api/scenario/9/bounds",
        "/api/scenario/nine/polygons.geojson",
        "/api/lulc/1850.png",
        "/api/lulc/2021.jpg",
        "/api/nothing",
        "/api/query?x=490505&y=5461505&h=9",
    ] {
        let (status, _, _) = get(uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn polygons_are_geographic_and_trace_cell_edges() {
    let s = state();
    let grid = &s.catalog().grid;
    let tm = s.projection();
    for h in [1, 4] {
        let (status, headers, body) = get(&format!("/api/scenario/{h}/polygons.geojson")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(content_type(&headers), "application/geo+json");
        let v: Value = serde_json::from_slice(&body).unwrap();
        let features = v["features"].as_array().unwrap();
        assert!(!features.is_empty());
        let mask = read_class_grid(&out_dir().join(format!("scenarios/mask_{h}m.asc")), ASC);
        let cells = mask.unwrap().count_of(WET) as f64;
        let mut area = 0.0;
        for f in features {
            assert_eq!(f["properties"]["height_m"].as_f64(), Some(f64::from(h)));
            area += f["properties"]["area_km2"].as_f64().unwrap();
            let g = &f["geometry"];
            let polys = match g["type"].as_str().unwrap() {
                "Polygon" => vec![g["coordinates"].clone()],
                _ => g["coordinates"].as_array().unwrap().clone(),
            };
            for poly in polys {
                for ring in poly.as_array().unwrap() {
                    for pt in ring.as_array().unwrap() {
                        let (lon, lat) = (pt[0].as_f64().unwrap(), pt[1].as_f64().unwrap());
                        assert!(s.catalog().bounds.geographic.contains(lon, lat));
                        // Back in projected space every vertex is a cell corner.
                        let (x, y) = tm.forward(lon, lat);
                        let fx = (x - grid.origin_x) / grid.cell_size;
                        let fy = (y - grid.origin_y) / grid.cell_size;
                        assert!((fx - fx.round()).abs() < 0.05 && (fy - fy.round()).abs() < 0.05);
                    }
                }
            }
        }
        assert!((area - cells * 100.0 / 1e6).abs() < 1e-9);
    }
}

#[tokio::test]
async fn query_agrees_with_direct_grid_lookups() {
    let dem = read_float_grid(&out_dir().join("ingest/dem.asc"), ASC).unwrap();
    let lulc = read_class_grid(&out_dir().join("lulc/lulc_2021.asc"), ASC).unwrap();
    let masks: Vec<(f64, ClassGrid)> = [1.0, 2.0, 3.0, 4.0]
        .into_iter()
        .map(|h| (h, read_class_grid(&out_dir().join(format!("scenarios/mask_{h}m.asc")), ASC).unwrap()))
        .collect();
    let pois = coastal_slr::raster::VectorLayer::read(&out_dir().join("catalog/pois.geojson")).unwrap();
    let hdr = dem.header().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut probes: Vec<(usize, usize)> = (0..40).map(|_| (rng.random_range(0..256), rng.random_range(0..256))).collect();
    // Make sure wet cells are among the probes.
    let wet4: Vec<usize> = (0..hdr.len()).filter(|&i| masks[3].1.cells()[i] == WET).collect();
    probes.extend((0..10).map(|_| hdr.row_col(wet4[rng.random_range(0..wet4.len())])));
    let mut wet_seen = 0;
    for (row, col) in probes {
        let (cx, cy) = hdr.cell_center(row, col);
        // Anywhere inside the cell resolves to it.
        let (x, y) = (cx + rng.random_range(-4.9..4.9), cy + rng.random_range(-4.9..4.9));
        for (h, mask) in &masks {
            let q: PointQuery = serde_json::from_value(get_json(&format!("/api/query?x={x}&y={y}&h={h}")).await).unwrap();
            assert_eq!((q.row, q.col), (row, col));
            let wet = mask.get(row, col) == Some(WET);
            assert_eq!(q.inundated, wet);
            wet_seen += usize::from(wet);
            let elev = dem.get(row, col);
            assert_eq!(q.ground_elev_m, elev);
            let depth = if wet { (h - elev.unwrap()).max(0.0) } else { 0.0 };
            assert_eq!(q.depth_m, depth);
            assert_eq!(q.lulc_class.as_ref().map(|c| c.id), lulc.get(row, col));
            let nearest = pois
                .features
                .iter()
                .map(|f| match f.geometry {
                    coastal_slr::raster::Geometry::Point([px, py]) => ((px - x).hypot(py - y), f.properties["id"].clone()),
                    _ => unreachable!(),
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            let np = q.nearest_poi.unwrap();
            assert_eq!(np.id, nearest.1);
            assert!((np.distance_m - nearest.0).abs() < 1e-9);
        }
    }
    assert!(wet_seen >= 10);
}

#[tokio::test]
async fn query_by_lon_lat_matches_query_by_x_y() {
    let hdr = state().catalog().grid.clone();
    let tm = state().projection().clone();
    for (r, c) in [(105, 50), (128, 70), (30, 200), (250, 10)] {
        let (x, y) = hdr.cell_center(r, c);
        let (lon, lat) = tm.inverse(x, y);
        let a = get_json(&format!("/api/query?x={x}&y={y}&h=2")).await;
        let b = get_json(&format!("/api/query?lon={lon}&lat={lat}&h=2")).await;
        assert_eq!(a["row"], b["row"]);
        assert_eq!(a["col"], b["col"]);
        assert_eq!(a["inundated"], b["inundated"]);
        assert_eq!(a["depth_m"], b["depth_m"]);
        // Round trip well within half a cell.
        assert!((b["x"].as_f64().unwrap() - x).hypot(b["y"].as_f64().unwrap() - y) < 0.5 * hdr.cell_size);
    }
}

#[tokio::test]
async fn low_cells_cut_off_from_the_sea_stay_dry() {
    let dem = read_float_grid(&out_dir().join("ingest/dem_clipped.asc"), ASC).unwrap();
    let mask = read_class_grid(&out_dir().join("scenarios/mask_4m.asc"), ASC).unwrap();
    let hdr = dem.header().clone();
    let isolated: Vec<usize> = (0..hdr.len())
        .filter(|&i| dem.value(i).is_some_and(|z| z <= 4.0) && mask.cells()[i] != WET)
        .collect();
    assert!(!isolated.is_empty(), "the fixture ponds sit below 4 m");
    for &i in isolated.iter().step_by(isolated.len().div_ceil(5)) {
        let (x, y) = hdr.cell_center(hdr.row_col(i).0, hdr.row_col(i).1);
        let q = get_json(&format!("/api/query?x={x}&y={y}&h=4")).await;
        assert_eq!(q["inundated"], false);
        assert_eq!(q["depth_m"], 0.0);
        assert_eq!(q["ground_elev_m"].as_f64(), dem.value(i));
    }
}

#[tokio::test]
async fn query_outside_the_grid_is_422_with_the_extent() {
    let (status, _, body) = get("/api/query?x=1&y=1&h=4").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&body).unwrap();
    let bounds: coastal_slr::pipeline::catalog::Bounds = serde_json::from_value(v["extent"].clone()).unwrap();
    assert_eq!(bounds, state().catalog().bounds);
    let (status, _, _) = get("/api/query?h=4").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stats_mirror_the_csv() {
    let served: Vec<coastal_slr::inundation::ScenarioStats> = serde_json::from_value(get_json("/api/stats").await).unwrap();
    let csv = read_stats_csv(&out_dir().join("stats/scenario_stats.csv")).unwrap();
    assert_eq!(served, csv);
}

#[tokio::test]
async fn pois_carry_popup_fields_and_a_flood_summary_per_height() {
    let (_, headers, body) = get("/api/pois").await;
    assert_eq!(content_type(&headers), "application/geo+json");
    let v: Value = serde_json::from_slice(&body).unwrap();
    let features = v["features"].as_array().unwrap();
    assert_eq!(features.len(), 9);
    let tm = state().projection().clone();
    for f in features {
        let p = &f["properties"];
        for key in ["id", "name", "description", "image", "link"] {
            assert!(p[key].is_string(), "missing {key}");
        }
        let summary = p["flood_summary"].as_array().unwrap();
        let heights: Vec<f64> = summary.iter().map(|s| s["height_m"].as_f64().unwrap()).collect();
        assert_eq!(heights, [1.0, 2.0, 3.0, 4.0]);
        let c = &f["geometry"]["coordinates"];
        let (lon, lat) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
        assert_eq!((p["lon"].as_f64().unwrap(), p["lat"].as_f64().unwrap()), (lon, lat));
        let (x, y) = tm.forward(lon, lat);
        assert!((x - p["x"].as_f64().unwrap()).hypot(y - p["y"].as_f64().unwrap()) < 5.0);
        // The popup agrees with a live query.
        for s in summary {
            let q = get_json(&format!("/api/query?x={}&y={}&h={}", p["x"], p["y"], s["height_m"])).await;
            assert_eq!(q["inundated"], s["inundated"]);
            assert_eq!(q["depth_m"], s["depth_m"]);
        }
    }
}

#[tokio::test]
async fn lulc_png_uses_legend_colors() {
    let grid = read_class_grid(&out_dir().join("lulc/lulc_2021.asc"), ASC).unwrap();
    let legend_text = std::fs::read_to_string(out_dir().join("lulc/lulc_2021.legend")).unwrap();
    let (status, headers, body) = get("/api/lulc/2021.png").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(content_type(&headers), "image/png");
    let (w, _, px) = decode_png(&body);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 10 {
        let (r, c) = (rng.random_range(0..256), rng.random_range(0..256));
        let Some(class) = grid.get(r, c) else { continue };
        // Independent read of the legend sidecar: "<id>\t<name>\t<#color>" lines.
        let hex = legend_text
            .lines()
            .find_map(|l| {
                let parts: Vec<&str> = l.split('\t').collect();
                (parts[0] == class.to_string()).then(|| parts[2].to_string())
            })
            .unwrap();
        let expected = Rgba::parse_hex(&hex).unwrap();
        let i = 4 * (r * w + c);
        assert_eq!(px[i..i + 4], expected.0, "cell ({r}, {c}) class {class}");
        checked += 1;
    }

    let (_, _, observed) = get("/api/lulc/2011.png").await;
    let (status, _, projected) = get("/api/lulc/2011.png?source=projected").await;
    assert_eq!(status, StatusCode::OK);
    assert_ne!(observed, projected);
    let (status, _, _) = get("/api/lulc/2100.png?source=observed").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = get("/api/lulc/2100.png").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn boundary_and_docs_are_served() {
    let (status, headers, body) = get("/api/boundary.geojson").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(content_type(&headers), "application/geo+json");
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["features"].as_array().unwrap().len(), 1);
    let (status, headers, body) = get("/api/docs").await;
    assert_eq!(status, StatusCode::OK);
    assert!(content_type(&headers).starts_with("text/html"));
    let text = String::from_utf8(body.to_vec()).unwrap();
    for route in ["/api/catalog", "/api/query", "/api/stats", "/api/pois", "/api/lulc/"] {
        assert!(text.contains(route), "{route} undocumented");
    }
}

#[tokio::test]
async fn responses_are_byte_stable_across_loads() {
    let other = Arc::new(ServiceState::load(catalog_path()).unwrap());
    for uri in [
        "/api/catalog",
        "/api/scenario/3/overlay.png",
        "/api/scenario/3/polygons.geojson",
        "/api/stats",
        "/api/pois",
        "/api/lulc/2021.png",
        "/api/query?x=490505&y=5461505&h=4",
    ] {
        let (_, _, a) = get(uri).await;
        let res = router(other.clone()).oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
        let b = res.into_body().collect().await.unwrap().to_bytes();
        assert_eq!(a, b, "{uri}");
    }
}

#[test]
fn service_refuses_a_tampered_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let src = out_dir();
    copy_dir(src, tmp.path());
    std::fs::write(tmp.path().join("stats/scenario_stats.csv"), "height_m\n").unwrap();
    assert!(ServiceState::load(&tmp.path().join(CATALOG_FILE)).is_err());
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.path().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

fn header(ncols: usize, nrows: usize) -> GridHeader {
    GridHeader::new(ncols, nrows, 1.0, 0.0, 0.0, "", 255.0).unwrap()
}

#[test]
fn all_dry_mask_renders_fully_transparent() {
    let mask = ClassGrid::filled(header(7, 5), 0, mask_legend()).unwrap();
    let img = render_mask(&mask, Rgba([255, 0, 0, 255]), 0.5, 4096);
    assert_eq!((img.width, img.height, img.factor), (7, 5, 1));
    assert_eq!(img.opaque_count(), 0);
}

#[test]
fn downsampled_pixel_is_wet_when_any_cell_under_it_is() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (nc, nr) = (rng.random_range(1..40), rng.random_range(1..40));
        let max_px = rng.random_range(1..12);
        let cells: Vec<u8> = (0..nc * nr).map(|_| u8::from(rng.random_bool(0.05))).collect();
        let mask = ClassGrid::new(header(nc, nr), cells.clone(), mask_legend()).unwrap();
        let img = render_mask(&mask, Rgba([0, 0, 255, 255]), 1.0, max_px);
        let f = downsample_factor(mask.header(), max_px);
        assert!(img.width.max(img.height) <= max_px);
        assert_eq!((img.width, img.height), (nc.div_ceil(f), nr.div_ceil(f)));
        for py in 0..img.height {
            for px in 0..img.width {
                let any = (py * f..(py * f + f).min(nr))
                    .any(|r| (px * f..(px * f + f).min(nc)).any(|c| cells[r * nc + c] == 1));
                assert_eq!(img.pixel(px, py).0[3] == 255, any);
            }
        }
    }
}

#[test]
fn downsampled_classes_take_the_block_majority() {
    let legend = coastal_slr::raster::Legend::new()
        .with(1, "a", Rgba([10, 0, 0, 255]))
        .with(2, "b", Rgba([20, 0, 0, 255]));
    // 4x2 grid, factor 2: left block has three 2s, right block ties 1/2.
    let cells = vec![2, 2, 1, 2, 2, 1, 1, 2];
    let grid = ClassGrid::new(header(4, 2).with_nodata(255.0), cells, legend).unwrap();
    let img = render_classes(&grid, 2);
    assert_eq!((img.width, img.height, img.factor), (2, 1, 2));
    assert_eq!(img.pixel(0, 0).0[0], 20);
    assert_eq!(img.pixel(1, 0).0[0], 10);
}
