//! The publishable manifest of a pipeline run.
//!
//! `catalog.json` sits at the root of the output directory. Every `source`
//! and `files[].path` is relative to that directory; every `href` is the
//! service route that serves the layer. Nothing in it depends on where the
//! run happened or when, so equal inputs give a byte-identical file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{sha256_bytes, sha256_file};
use super::stages::{
    lulc_path, mask_path, polygons_path, projected_path, projection_years, Ctx, STATS_CSV, STUDY_AREA,
    VALIDATION_CSV, VALIDATION_MAP,
};
use super::Stage;
use crate::error::{Error, Result};
use crate::geodesy::TransverseMercator;
use crate::inundation::WET;
use crate::raster::{
    read_class_grid, read_float_grid, Coord, Extent, FloatGrid, GridFormat, GridHeader, Legend, Rgba,
    VectorLayer,
};

pub const CATALOG_FILE: &str = "catalog.json";
pub const CATALOG_FORMAT: &str = "coastal-slr-catalog/1";
pub const POIS_FILE: &str = "catalog/pois.geojson";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl GeoBox {
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        (self.west..=self.east).contains(&lon) && (self.south..=self.north).contains(&lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub projected: Extent,
    pub geographic: GeoBox,
}

/// Parameters of the projected to geographic conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInfo {
    pub method: String,
    pub ellipsoid: String,
    pub semi_major_axis_m: f64,
    pub flattening: f64,
    pub central_meridian_deg: f64,
    pub scale_factor: f64,
    pub false_easting_m: f64,
    pub false_northing_m: f64,
    pub datum_shift: String,
}

impl ProjectionInfo {
    pub fn of(tm: &TransverseMercator) -> Self {
        ProjectionInfo {
            method: "transverse_mercator_kruger6".into(),
            ellipsoid: tm.ellipsoid.name.into(),
            semi_major_axis_m: tm.ellipsoid.a,
            flattening: tm.ellipsoid.f,
            central_meridian_deg: tm.lon0_deg,
            scale_factor: tm.k0,
            false_easting_m: tm.false_easting,
            false_northing_m: tm.false_northing,
            datum_shift: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    RasterOverlay,
    Vector,
    Points,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub id: u8,
    pub name: String,
    pub color: Rgba,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStyle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgba>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub legend: Vec<LegendEntry>,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub id: String,
    pub kind: LayerKind,
    pub title: String,
    pub bounds: Bounds,
    pub style: LayerStyle,
    pub href: String,
    /// Backing file, relative to the catalog.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygons_href: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds_href: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub height_m: f64,
    pub mask: String,
    pub polygons: String,
    pub inundated_cells: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LulcSource {
    Observed,
    Classified,
    Projected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LulcEntry {
    pub year: i32,
    pub source: LulcSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slr_m: Option<f64>,
    pub grid: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub year: i32,
    pub map: String,
    pub counts: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCatalog {
    pub format: String,
    pub crs_tag: String,
    pub grid: GridHeader,
    pub projection: ProjectionInfo,
    pub bounds: Bounds,
    /// Longest edge of a rendered overlay in pixels.
    pub max_overlay_px: usize,
    pub heights: Vec<f64>,
    pub dem: String,
    pub study_area: String,
    pub stats: String,
    pub layers: Vec<LayerDescriptor>,
    pub scenarios: Vec<ScenarioEntry>,
    pub lulc: Vec<LulcEntry>,
    pub current_lulc_year: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pois: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationEntry>,
    /// CSV and text reports, sorted.
    pub reports: Vec<String>,
    /// Every file the catalog depends on, sorted by path.
    pub files: Vec<FileEntry>,
}

impl ScenarioCatalog {
    pub fn scenario(&self, height_m: f64) -> Option<&ScenarioEntry> {
        self.scenarios.iter().find(|s| s.height_m == height_m)
    }

    /// Observed or classified maps win over a projection of the same year.
    pub fn lulc_for(&self, year: i32, source: Option<LulcSource>) -> Option<&LulcEntry> {
        let mut matching: Vec<&LulcEntry> = self
            .lulc
            .iter()
            .filter(|e| e.year == year && source.is_none_or(|s| s == e.source))
            .collect();
        matching.sort_by_key(|e| e.source == LulcSource::Projected);
        matching.first().copied()
    }

    pub fn layer(&self, id: &str) -> Option<&LayerDescriptor> {
        self.layers.iter().find(|l| l.id == id)
    }
}

/// Parse a catalog without checking its files.
pub fn load_catalog(path: &Path) -> Result<ScenarioCatalog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let catalog: ScenarioCatalog = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    if catalog.format != CATALOG_FORMAT {
        return Err(Error::Catalog(format!("unsupported catalog format `{}`", catalog.format)));
    }
    Ok(catalog)
}

/// Parse a catalog and check every listed file against its checksum.
pub fn verify_catalog(path: &Path) -> Result<ScenarioCatalog> {
    let catalog = load_catalog(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    for f in &catalog.files {
        let full = root.join(&f.path);
        let actual = sha256_file(&full).map_err(|_| Error::Catalog(format!("missing file {}", f.path)))?;
        if actual != f.sha256 {
            return Err(Error::Catalog(format!("checksum mismatch for {}", f.path)));
        }
    }
    Ok(catalog)
}

/// Geographic box of a projected extent, from densely sampled edges.
pub fn geographic_box(tm: &TransverseMercator, e: &Extent) -> GeoBox {
    const STEPS: usize = 64;
    let mut pts = Vec::with_capacity(4 * (STEPS + 1));
    for i in 0..=STEPS {
        let t = i as f64 / STEPS as f64;
        let x = e.min_x + t * (e.max_x - e.min_x);
        let y = e.min_y + t * (e.max_y - e.min_y);
        pts.extend([[x, e.min_y], [x, e.max_y], [e.min_x, y], [e.max_x, y]]);
    }
    // A sliver of padding covers curvature between samples.
    let pad = 1e-7;
    let b = geo_box_of(tm, pts);
    GeoBox { west: b.west - pad, south: b.south - pad, east: b.east + pad, north: b.north + pad }
}

fn geo_box_of(tm: &TransverseMercator, pts: impl IntoIterator<Item = Coord>) -> GeoBox {
    let mut b = GeoBox { west: f64::INFINITY, south: f64::INFINITY, east: f64::NEG_INFINITY, north: f64::NEG_INFINITY };
    for [x, y] in pts {
        let (lon, lat) = tm.inverse(x, y);
        b.west = b.west.min(lon);
        b.east = b.east.max(lon);
        b.south = b.south.min(lat);
        b.north = b.north.max(lat);
    }
    b
}

fn layer_bounds(tm: &TransverseMercator, layer: &VectorLayer, fallback: Bounds) -> Bounds {
    let coords: Vec<Coord> = layer
        .polygons()
        .flat_map(|p| p.rings().flatten().copied().collect::<Vec<_>>())
        .chain(layer.points())
        .collect();
    if coords.is_empty() {
        return fallback;
    }
    let mut e = Extent { min_x: f64::INFINITY, min_y: f64::INFINITY, max_x: f64::NEG_INFINITY, max_y: f64::NEG_INFINITY };
    for [x, y] in &coords {
        e.min_x = e.min_x.min(*x);
        e.max_x = e.max_x.max(*x);
        e.min_y = e.min_y.min(*y);
        e.max_y = e.max_y.max(*y);
    }
    Bounds { projected: e, geographic: geo_box_of(tm, coords) }
}

fn legend_entries(legend: &Legend) -> Vec<LegendEntry> {
    legend
        .iter()
        .map(|(id, info)| LegendEntry { id, name: info.name.clone(), color: info.color })
        .collect()
}

/// Per-height flood status at a point of the DEM grid.
pub fn flood_summary(x: f64, y: f64, dem: &FloatGrid, masks: &[(f64, crate::raster::ClassGrid)]) -> serde_json::Value {
    let cell = dem.header().cell_at(x, y);
    let elev = cell.and_then(|(r, c)| dem.get(r, c));
    let rows: Vec<_> = masks
        .iter()
        .map(|(h, mask)| {
            let wet = cell.and_then(|(r, c)| mask.get(r, c)) == Some(WET);
            let depth = match (wet, elev) {
                (true, Some(z)) => (h - z).max(0.0),
                _ => 0.0,
            };
            json!({ "height_m": h, "inundated": wet, "depth_m": depth })
        })
        .collect();
    json!(rows)
}

pub(super) fn build(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let asc = GridFormat::EsriAscii;
    let dem = read_float_grid(&cx.out.join("ingest/dem.asc"), asc)?;
    let header = dem.header().clone();
    let tm = TransverseMercator::from_crs_tag(&header.crs_tag)?;
    let extent = header.extent();
    let grid_bounds = Bounds { projected: extent, geographic: geographic_box(&tm, &extent) };
    let style = &c.style;
    let mask_color = Rgba::parse_hex(&style.mask_color)?;

    let mut layers = Vec::new();
    let mut scenarios = Vec::new();
    let mut masks = Vec::new();
    for &h in &c.heights {
        let mask = read_class_grid(&cx.out.join(mask_path(h)), asc)?;
        let label = super::height_label(h);
        scenarios.push(ScenarioEntry {
            height_m: h,
            mask: mask_path(h),
            polygons: polygons_path(h),
            inundated_cells: mask.count_of(WET) as u64,
        });
        layers.push(LayerDescriptor {
            id: format!("slr_{label}m"),
            kind: LayerKind::RasterOverlay,
            title: format!("{label} m sea-level rise"),
            bounds: grid_bounds,
            style: LayerStyle { color: Some(mask_color), legend: vec![], opacity: style.mask_opacity },
            href: format!("/api/scenario/{label}/overlay.png"),
            source: mask_path(h),
            height_m: Some(h),
            polygons_href: Some(format!("/api/scenario/{label}/polygons.geojson")),
            bounds_href: Some(format!("/api/scenario/{label}/bounds")),
            year: None,
        });
        masks.push((h, mask));
    }

    let y = &c.years;
    let mut lulc = vec![
        LulcEntry { year: y.t1, source: LulcSource::Observed, slr_m: None, grid: lulc_path(y.t1) },
        LulcEntry { year: y.t2, source: LulcSource::Observed, slr_m: None, grid: lulc_path(y.t2) },
    ];
    if c.lulc.t3.is_some() {
        lulc.push(LulcEntry { year: y.t3, source: LulcSource::Observed, slr_m: None, grid: lulc_path(y.t3) });
    }
    let current_source = if c.classification.is_some() { LulcSource::Classified } else { LulcSource::Observed };
    lulc.push(LulcEntry { year: y.current, source: current_source, slr_m: None, grid: lulc_path(y.current) });
    for (year, slr_m) in projection_years(c) {
        lulc.push(LulcEntry { year, source: LulcSource::Projected, slr_m, grid: projected_path(year) });
    }
    lulc.sort_by_key(|e| (e.year, e.source == LulcSource::Projected));

    let current = read_class_grid(&cx.out.join(lulc_path(y.current)), asc)?;
    layers.push(LayerDescriptor {
        id: format!("lulc_{}", y.current),
        kind: LayerKind::RasterOverlay,
        title: format!("Land cover {}", y.current),
        bounds: grid_bounds,
        style: LayerStyle { color: None, legend: legend_entries(current.legend()), opacity: style.lulc_opacity },
        href: format!("/api/lulc/{}.png", y.current),
        source: lulc_path(y.current),
        height_m: None,
        polygons_href: None,
        bounds_href: None,
        year: Some(y.current),
    });

    let boundary_file = "ingest/boundary.geojson";
    let boundary = if cx.out.join(boundary_file).is_file() {
        let layer = VectorLayer::read(&cx.out.join(boundary_file))?;
        layers.push(LayerDescriptor {
            id: "boundary".into(),
            kind: LayerKind::Vector,
            title: "Municipal boundary".into(),
            bounds: layer_bounds(&tm, &layer, grid_bounds),
            style: LayerStyle {
                color: Some(Rgba::parse_hex(&style.boundary_color)?),
                legend: vec![],
                opacity: 1.0,
            },
            href: "/api/boundary.geojson".into(),
            source: boundary_file.into(),
            height_m: None,
            polygons_href: None,
            bounds_href: None,
            year: None,
        });
        Some(boundary_file.to_string())
    } else {
        None
    };

    let pois = match &c.pois {
        Some(path) => {
            let mut layer = VectorLayer::read(path)?;
            if layer.crs_tag != header.crs_tag {
                return Err(Error::CrsMismatch { left: header.crs_tag.clone(), right: layer.crs_tag });
            }
            for f in &mut layer.features {
                let [x, yy] = match f.geometry {
                    crate::raster::Geometry::Point(p) => p,
                    _ => return Err(Error::parse(path.display().to_string(), "POIs must be points")),
                };
                let (lon, lat) = tm.inverse(x, yy);
                f.properties.insert("lon".into(), json!(lon));
                f.properties.insert("lat".into(), json!(lat));
                f.properties.insert("flood_summary".into(), flood_summary(x, yy, &dem, &masks));
            }
            layer.write(&cx.out.join(POIS_FILE))?;
            layers.push(LayerDescriptor {
                id: "pois".into(),
                kind: LayerKind::Points,
                title: "Points of interest".into(),
                bounds: layer_bounds(&tm, &layer, grid_bounds),
                style: LayerStyle { color: Some(Rgba([0xd9, 0x4f, 0x1e, 0xff])), legend: vec![], opacity: 1.0 },
                href: "/api/pois".into(),
                source: POIS_FILE.into(),
                height_m: None,
                polygons_href: None,
                bounds_href: None,
                year: None,
            });
            Some(POIS_FILE.to_string())
        }
        None => None,
    };

    let validation = c.lulc.t3.as_ref().map(|_| ValidationEntry {
        year: y.t3,
        map: VALIDATION_MAP.into(),
        counts: VALIDATION_CSV.into(),
    });

    let mut files: BTreeMap<String, String> = BTreeMap::new();
    for (stage, record) in cx.records {
        if *stage != Stage::Catalog {
            files.extend(record.outputs.clone());
        }
    }
    if pois.is_some() {
        files.insert(POIS_FILE.into(), sha256_file(&cx.out.join(POIS_FILE))?);
    }
    let reports = files
        .keys()
        .filter(|p| p.ends_with(".csv") || p.ends_with(".txt"))
        .cloned()
        .collect();
    let files = files
        .into_iter()
        .map(|(path, sha256)| {
            let full = cx.out.join(&path);
            let bytes = fs::metadata(&full).map_err(|e| Error::io(&full, e))?.len();
            Ok(FileEntry { path, sha256, bytes })
        })
        .collect::<Result<Vec<_>>>()?;

    let catalog = ScenarioCatalog {
        format: CATALOG_FORMAT.into(),
        crs_tag: header.crs_tag.clone(),
        projection: ProjectionInfo::of(&tm),
        grid: header,
        bounds: grid_bounds,
        max_overlay_px: style.max_overlay_px,
        heights: c.heights.clone(),
        dem: "ingest/dem.asc".into(),
        study_area: STUDY_AREA.into(),
        stats: STATS_CSV.into(),
        layers,
        scenarios,
        lulc,
        current_lulc_year: y.current,
        pois,
        boundary,
        validation,
        reports,
        files,
    };
    let text = serde_json::to_string_pretty(&catalog).expect("catalog serializes") + "\n";
    let path = cx.out.join(CATALOG_FILE);
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    log::info!("catalog {} written ({})", path.display(), &sha256_bytes(text.as_bytes())[..12]);
    Ok(())
}
