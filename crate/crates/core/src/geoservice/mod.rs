//! Read-only HTTP service over a finished catalog.
//!
//! Everything is loaded and rendered once at startup into an immutable
//! [`ServiceState`]; handlers only look things up, so responses for a fixed
//! catalog are byte-stable. Geographic output goes through the catalog's
//! Transverse Mercator inverse and nothing else.

pub mod render;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use crate::error::{Error, Result};
use crate::geodesy::TransverseMercator;
use crate::inundation::{read_stats_csv, WET};
use crate::pipeline::cache::sha256_bytes;
use crate::pipeline::catalog::{Bounds, LulcEntry, LulcSource};
use crate::pipeline::{verify_catalog, ScenarioCatalog};
use crate::raster::{read_class_grid, read_float_grid, ClassGrid, FloatGrid, GridFormat, VectorLayer};
use render::{overlay_bounds, render_classes, render_mask};

pub const GEOJSON: &str = "application/geo+json";
/// Tag on every served vector layer: `[lon, lat]` degrees on the grid's datum.
pub const GEOGRAPHIC_CRS: &str = "OGC:CRS84";

const API_DOCS: &str = include_str!("api.html");

struct ScenarioAssets {
    height_m: f64,
    mask: ClassGrid,
    overlay: Bytes,
    bounds: Bytes,
    polygons: Bytes,
}

struct Poi {
    id: Value,
    name: Value,
    x: f64,
    y: f64,
}

/// Immutable state shared by all handlers.
pub struct ServiceState {
    catalog: ScenarioCatalog,
    catalog_json: Bytes,
    etag: String,
    tm: TransverseMercator,
    dem: FloatGrid,
    current_lulc: ClassGrid,
    scenarios: Vec<ScenarioAssets>,
    lulc: Vec<(LulcEntry, Bytes)>,
    pois: Vec<Poi>,
    pois_geojson: Bytes,
    boundary_geojson: Option<Bytes>,
    stats_json: Bytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LulcClass {
    pub id: u8,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestPoi {
    pub id: Value,
    pub name: Value,
    pub distance_m: f64,
}

/// Body of `/api/query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointQuery {
    pub x: f64,
    pub y: f64,
    pub lon: f64,
    pub lat: f64,
    pub row: usize,
    pub col: usize,
    pub height_m: f64,
    pub inundated: bool,
    pub ground_elev_m: Option<f64>,
    pub depth_m: f64,
    pub lulc_class: Option<LulcClass>,
    pub nearest_poi: Option<NearestPoi>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryError {
    UnknownHeight(f64),
    OutsideExtent,
}

fn geojson_bytes(layer: &VectorLayer) -> Bytes {
    Bytes::from(serde_json::to_vec(&layer.to_geojson()).expect("geojson serializes"))
}

fn json_bytes<T: Serialize>(value: &T) -> Bytes {
    Bytes::from(serde_json::to_vec(value).expect("json serializes"))
}

impl ServiceState {
    /// Verify the catalog's checksums, then load and pre-render every payload.
    pub fn load(catalog_path: &Path) -> Result<ServiceState> {
        let catalog = verify_catalog(catalog_path)?;
        let root = catalog_path.parent().unwrap_or(Path::new("."));
        let raw = std::fs::read(catalog_path).map_err(|e| Error::io(catalog_path, e))?;
        let asc = GridFormat::EsriAscii;
        let tm = TransverseMercator::from_crs_tag(&catalog.crs_tag)?;
        let dem = read_float_grid(&root.join(&catalog.dem), asc)?;

        let mut scenarios = Vec::new();
        for s in &catalog.scenarios {
            let mask = read_class_grid(&root.join(&s.mask), asc)?;
            let style = &catalog
                .layers
                .iter()
                .find(|l| l.height_m == Some(s.height_m))
                .ok_or_else(|| Error::Catalog(format!("no layer for the {} m scenario", s.height_m)))?
                .style;
            let color = style.color.ok_or_else(|| Error::Catalog("scenario layer without a color".into()))?;
            let opacity = style.opacity;
            let image = render_mask(&mask, color, opacity, catalog.max_overlay_px);
            let bounds = overlay_bounds(mask.header(), &image, &tm);
            let polygons = to_geographic(&VectorLayer::read(&root.join(&s.polygons))?, &tm);
            scenarios.push(ScenarioAssets {
                height_m: s.height_m,
                overlay: Bytes::from(image.encode_png()),
                bounds: json_bytes(&bounds),
                polygons: geojson_bytes(&polygons),
                mask,
            });
        }

        let mut lulc = Vec::new();
        let mut current_lulc = None;
        for entry in &catalog.lulc {
            let grid = read_class_grid(&root.join(&entry.grid), asc)?;
            let png = render_classes(&grid, catalog.max_overlay_px).encode_png();
            if catalog.lulc_for(catalog.current_lulc_year, None) == Some(entry) {
                current_lulc = Some(grid);
            }
            lulc.push((entry.clone(), Bytes::from(png)));
        }
        let current_lulc = current_lulc
            .ok_or_else(|| Error::Catalog(format!("no land cover for {}", catalog.current_lulc_year)))?;

        let mut pois = Vec::new();
        let mut pois_layer = VectorLayer::new(GEOGRAPHIC_CRS);
        if let Some(rel) = &catalog.pois {
            let layer = VectorLayer::read(&root.join(rel))?;
            for f in &layer.features {
                let crate::raster::Geometry::Point([x, y]) = f.geometry else { continue };
                pois.push(Poi {
                    id: f.properties.get("id").cloned().unwrap_or(Value::Null),
                    name: f.properties.get("name").cloned().unwrap_or(Value::Null),
                    x,
                    y,
                });
            }
            pois_layer = to_geographic(&layer, &tm);
            for (f, p) in pois_layer.features.iter_mut().zip(&layer.features) {
                if let crate::raster::Geometry::Point([x, y]) = p.geometry {
                    f.properties.insert("x".into(), json!(x));
                    f.properties.insert("y".into(), json!(y));
                }
            }
        }
        let boundary_geojson = match &catalog.boundary {
            Some(rel) => Some(geojson_bytes(&to_geographic(&VectorLayer::read(&root.join(rel))?, &tm))),
            None => None,
        };
        let stats = read_stats_csv(&root.join(&catalog.stats))?;

        Ok(ServiceState {
            etag: format!("\"{}\"", sha256_bytes(&raw)),
            catalog_json: Bytes::from(raw),
            stats_json: json_bytes(&stats),
            pois_geojson: geojson_bytes(&pois_layer),
            boundary_geojson,
            catalog,
            tm,
            dem,
            current_lulc,
            scenarios,
            lulc,
            pois,
        })
    }

    pub fn catalog(&self) -> &ScenarioCatalog {
        &self.catalog
    }

    /// Quoted strong validator of the catalog file.
    pub fn etag(&self) -> &str {
        &self.etag
    }

    pub fn projection(&self) -> &TransverseMercator {
        &self.tm
    }

    fn scenario(&self, label: &str) -> Option<&ScenarioAssets> {
        let h: f64 = label.parse().ok()?;
        self.scenarios.iter().find(|s| (s.height_m - h).abs() < 1e-9)
    }

    /// Flood and land-cover status of the cell containing projected `(x, y)`.
    pub fn query(&self, x: f64, y: f64, h: f64) -> std::result::Result<PointQuery, QueryError> {
        let s = self
            .scenarios
            .iter()
            .find(|s| (s.height_m - h).abs() < 1e-9)
            .ok_or(QueryError::UnknownHeight(h))?;
        let (row, col) = self.dem.header().cell_at(x, y).ok_or(QueryError::OutsideExtent)?;
        let elev = self.dem.get(row, col);
        let inundated = s.mask.header().cell_at(x, y).and_then(|(r, c)| s.mask.get(r, c)) == Some(WET);
        let depth_m = match (inundated, elev) {
            (true, Some(z)) => (s.height_m - z).max(0.0),
            _ => 0.0,
        };
        let lulc_class = self
            .current_lulc
            .header()
            .cell_at(x, y)
            .and_then(|(r, c)| self.current_lulc.get(r, c))
            .map(|id| LulcClass {
                id,
                name: self.current_lulc.legend().get(id).map_or_else(|| format!("class {id}"), |i| i.name.clone()),
            });
        let nearest_poi = self
            .pois
            .iter()
            .map(|p| (p, (p.x - x).hypot(p.y - y)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, d)| NearestPoi { id: p.id.clone(), name: p.name.clone(), distance_m: d });
        let (lon, lat) = self.tm.inverse(x, y);
        Ok(PointQuery {
            x,
            y,
            lon,
            lat,
            row,
            col,
            height_m: s.height_m,
            inundated,
            ground_elev_m: elev,
            depth_m,
            lulc_class,
            nearest_poi,
        })
    }
}

/// Reproject every coordinate to `[lon, lat]`.
pub fn to_geographic(layer: &VectorLayer, tm: &TransverseMercator) -> VectorLayer {
    let project = |[x, y]: [f64; 2]| {
        let (lon, lat) = tm.inverse(x, y);
        [lon, lat]
    };
    VectorLayer {
        crs_tag: GEOGRAPHIC_CRS.into(),
        features: layer
            .features
            .iter()
            .map(|f| crate::raster::Feature {
                geometry: f.geometry.map_coords(&project),
                properties: f.properties.clone(),
            })
            .collect(),
    }
}

fn body(content_type: &'static str, bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, content_type)], bytes).into_response()
}

fn error(status: StatusCode, message: String, extra: Option<(&str, Value)>) -> Response {
    let mut v = json!({ "error": message });
    if let Some((k, x)) = extra {
        v[k] = x;
    }
    (status, axum::Json(v)).into_response()
}

fn not_found(what: String) -> Response {
    error(StatusCode::NOT_FOUND, what, None)
}

async fn catalog(State(s): State<Arc<ServiceState>>, headers: HeaderMap) -> Response {
    let etag = HeaderValue::from_str(&s.etag).expect("hex etag");
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').map(str::trim).any(|t| t == "*" || t.trim_start_matches("W/") == s.etag));
    if matches {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response();
    }
    ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json")), (header::ETAG, etag)], s.catalog_json.clone())
        .into_response()
}

async fn overlay(State(s): State<Arc<ServiceState>>, UrlPath(h): UrlPath<String>) -> Response {
    match s.scenario(&h) {
        Some(a) => body("image/png", a.overlay.clone()),
        None => not_found(format!("no scenario for height `{h}`")),
    }
}

async fn overlay_bounds_handler(State(s): State<Arc<ServiceState>>, UrlPath(h): UrlPath<String>) -> Response {
    match s.scenario(&h) {
        Some(a) => body("application/json", a.bounds.clone()),
        None => not_found(format!("no scenario for height `{h}`")),
    }
}

async fn polygons(State(s): State<Arc<ServiceState>>, UrlPath(h): UrlPath<String>) -> Response {
    match s.scenario(&h) {
        Some(a) => body(GEOJSON, a.polygons.clone()),
        None => not_found(format!("no scenario for height `{h}`")),
    }
}

#[derive(Debug, Deserialize)]
struct QueryParams {
    x: Option<f64>,
    y: Option<f64>,
    lon: Option<f64>,
    lat: Option<f64>,
    h: f64,
}

async fn query(State(s): State<Arc<ServiceState>>, Query(q): Query<QueryParams>) -> Response {
    let (x, y) = match (q.x, q.y, q.lon, q.lat) {
        (Some(x), Some(y), _, _) => (x, y),
        (_, _, Some(lon), Some(lat)) => s.tm.forward(lon, lat),
        _ => return error(StatusCode::BAD_REQUEST, "give x and y, or lon and lat".into(), None),
    };
    match s.query(x, y, q.h) {
        Ok(r) => axum::Json(r).into_response(),
        Err(QueryError::UnknownHeight(h)) => not_found(format!("no scenario for height {h}")),
        Err(QueryError::OutsideExtent) => {
            let extent: &Bounds = &s.catalog.bounds;
            error(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("point ({x}, {y}) is outside the grid"),
                Some(("extent", serde_json::to_value(extent).expect("bounds serialize"))),
            )
        }
    }
}

async fn stats(State(s): State<Arc<ServiceState>>) -> Response {
    body("application/json", s.stats_json.clone())
}

async fn pois(State(s): State<Arc<ServiceState>>) -> Response {
    body(GEOJSON, s.pois_geojson.clone())
}

async fn boundary(State(s): State<Arc<ServiceState>>) -> Response {
    match &s.boundary_geojson {
        Some(b) => body(GEOJSON, b.clone()),
        None => not_found("the catalog has no boundary".into()),
    }
}

#[derive(Debug, Deserialize)]
struct LulcParams {
    source: Option<LulcSource>,
}

async fn lulc(
    State(s): State<Arc<ServiceState>>,
    UrlPath(file): UrlPath<String>,
    Query(p): Query<LulcParams>,
) -> Response {
    let Some(year) = file.strip_suffix(".png").and_then(|y| y.parse::<i32>().ok()) else {
        return not_found(format!("no land cover at `{file}`"));
    };
    let Some(entry) = s.catalog.lulc_for(year, p.source) else {
        return not_found(format!("no land cover for {year}"));
    };
    let png = s.lulc.iter().find(|(e, _)| e == entry).map(|(_, b)| b.clone()).expect("rendered at load");
    body("image/png", png)
}

async fn docs() -> Response {
    body("text/html; charset=utf-8", Bytes::from_static(API_DOCS.as_bytes()))
}

async fn fallback() -> Response {
    not_found("no such endpoint; see /api/docs".into())
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET, Method::HEAD]);
    Router::new()
        .route("/api/catalog", get(catalog))
        .route("/api/scenario/{h}/overlay.png", get(overlay))
        .route("/api/scenario/{h}/bounds", get(overlay_bounds_handler))
        .route("/api/scenario/{h}/polygons.geojson", get(polygons))
        .route("/api/query", get(query))
        .route("/api/stats", get(stats))
        .route("/api/pois", get(pois))
        .route("/api/boundary.geojson", get(boundary))
        .route("/api/lulc/{file}", get(lulc))
        .route("/api/docs", get(docs))
        .fallback(fallback)
        .with_state(state)
        .layer(cors)
}

/// Serve until the process is stopped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("tcp {addr}"), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(format!("tcp {addr}"), e))?;
    log::info!("serving {} layers on http://{local}", state.catalog.layers.len());
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(format!("tcp {local}"), e))
}
