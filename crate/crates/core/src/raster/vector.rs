//! Vector features in map coordinates and their GeoJSON encoding.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub type Coord = [f64; 2];

/// Polygon with a counter-clockwise exterior and clockwise holes. Rings are
/// closed: the first vertex is repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<Coord>,
    pub holes: Vec<Vec<Coord>>,
}

impl Polygon {
    /// Closes rings if needed and fixes their orientation.
    pub fn new(exterior: Vec<Coord>, holes: Vec<Vec<Coord>>) -> Self {
        let mut exterior = close_ring(exterior);
        if ring_signed_area(&exterior) < 0.0 {
            exterior.reverse();
        }
        let holes = holes
            .into_iter()
            .map(|h| {
                let mut h = close_ring(h);
                if ring_signed_area(&h) > 0.0 {
                    h.reverse();
                }
                h
            })
            .collect();
        Polygon { exterior, holes }
    }

    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Polygon::new(
            vec![
                [min_x, min_y],
                [max_x, min_y],
                [max_x, max_y],
                [min_x, max_y],
            ],
            Vec::new(),
        )
    }

    /// Area with holes subtracted.
    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior) + self.holes.iter().map(|h| ring_signed_area(h)).sum::<f64>()
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Coord>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_polygon(self, x, y)
    }
}

fn close_ring(mut ring: Vec<Coord>) -> Vec<Coord> {
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
    ring
}

/// Shoelace area, positive for counter-clockwise rings. Coordinates are
/// shifted to the first vertex to keep large projected values exact.
pub fn ring_signed_area(ring: &[Coord]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let [x0, y0] = ring[0];
    let mut twice = 0.0;
    for w in ring.windows(2) {
        let (ax, ay) = (w[0][0] - x0, w[0][1] - y0);
        let (bx, by) = (w[1][0] - x0, w[1][1] - y0);
        twice += ax * by - bx * ay;
    }
    twice / 2.0
}

/// Crossing-number test over every ring of the polygon.
pub fn point_in_polygon(polygon: &Polygon, x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in polygon.rings() {
        for w in ring.windows(2) {
            let ([xi, yi], [xj, yj]) = (w[0], w[1]);
            if (yi > y) != (yj > y) {
                let x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi;
                if x < x_cross {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(Coord),
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

impl Geometry {
    pub fn polygons(&self) -> &[Polygon] {
        match self {
            Geometry::Point(_) => &[],
            Geometry::Polygon(p) => std::slice::from_ref(p),
            Geometry::MultiPolygon(ps) => ps,
        }
    }

    pub fn area(&self) -> f64 {
        self.polygons().iter().map(Polygon::area).sum()
    }

    /// Apply a coordinate transform to every vertex.
    pub fn map_coords(&self, f: &impl Fn(Coord) -> Coord) -> Geometry {
        let map_poly = |p: &Polygon| Polygon {
            exterior: p.exterior.iter().map(|&c| f(c)).collect(),
            holes: p
                .holes
                .iter()
                .map(|h| h.iter().map(|&c| f(c)).collect())
                .collect(),
        };
        match self {
            Geometry::Point(c) => Geometry::Point(f(*c)),
            Geometry::Polygon(p) => Geometry::Polygon(map_poly(p)),
            Geometry::MultiPolygon(ps) => Geometry::MultiPolygon(ps.iter().map(map_poly).collect()),
        }
    }

    fn to_json(&self) -> Value {
        let poly = |p: &Polygon| -> Value {
            Value::Array(
                p.rings()
                    .map(|r| Value::Array(r.iter().map(|c| json!([c[0], c[1]])).collect()))
                    .collect(),
            )
        };
        match self {
            Geometry::Point(c) => json!({"type": "Point", "coordinates": [c[0], c[1]]}),
            Geometry::Polygon(p) => json!({"type": "Polygon", "coordinates": poly(p)}),
            Geometry::MultiPolygon(ps) => json!({
                "type": "MultiPolygon",
                "coordinates": Value::Array(ps.iter().map(poly).collect()),
            }),
        }
    }

    fn from_json(v: &Value) -> Result<Geometry> {
        let err = |m: &str| Error::parse("geojson geometry", m);
        let kind = v.get("type").and_then(Value::as_str).ok_or_else(|| err("missing type"))?;
        let coords = v.get("coordinates").ok_or_else(|| err("missing coordinates"))?;
        match kind {
            "Point" => Ok(Geometry::Point(parse_coord(coords)?)),
            "Polygon" => Ok(Geometry::Polygon(parse_polygon(coords)?)),
            "MultiPolygon" => {
                let parts = coords.as_array().ok_or_else(|| err("coordinates must be an array"))?;
                Ok(Geometry::MultiPolygon(
                    parts.iter().map(parse_polygon).collect::<Result<_>>()?,
                ))
            }
            other => Err(Error::UnsupportedFormat(format!("geometry type {other}"))),
        }
    }
}

fn parse_coord(v: &Value) -> Result<Coord> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::parse("geojson", "position must have two numbers"))?;
    let x = arr[0].as_f64();
    let y = arr[1].as_f64();
    match (x, y) {
        (Some(x), Some(y)) => Ok([x, y]),
        _ => Err(Error::parse("geojson", "position must be numeric")),
    }
}

fn parse_polygon(v: &Value) -> Result<Polygon> {
    let rings = v
        .as_array()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| Error::parse("geojson", "polygon needs at least one ring"))?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring
            .as_array()
            .ok_or_else(|| Error::parse("geojson", "ring must be an array"))?
            .iter()
            .map(parse_coord)
            .collect::<Result<Vec<_>>>()?;
        if pts.len() < 4 || pts.first() != pts.last() {
            return Err(Error::parse("geojson", "ring must be closed with at least 4 positions"));
        }
        parsed.push(pts);
    }
    let exterior = parsed.remove(0);
    Ok(Polygon::new(exterior, parsed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn new(geometry: Geometry) -> Self {
        Feature {
            geometry,
            properties: Map::new(),
        }
    }

    pub fn with_property(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.properties.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorLayer {
    pub features: Vec<Feature>,
    pub crs_tag: String,
}

impl VectorLayer {
    pub fn new(crs_tag: impl Into<String>) -> Self {
        VectorLayer {
            features: Vec::new(),
            crs_tag: crs_tag.into(),
        }
    }

    pub fn with_feature(mut self, feature: Feature) -> Self {
        self.features.push(feature);
        self
    }

    pub fn polygons(&self) -> impl Iterator<Item = &Polygon> {
        self.features.iter().flat_map(|f| f.geometry.polygons())
    }

    pub fn points(&self) -> impl Iterator<Item = Coord> + '_ {
        self.features.iter().filter_map(|f| match f.geometry {
            Geometry::Point(c) => Some(c),
            _ => None,
        })
    }

    pub fn area(&self) -> f64 {
        self.features.iter().map(|f| f.geometry.area()).sum()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.polygons().any(|p| point_in_polygon(p, x, y))
    }

    /// RFC 7946 FeatureCollection with the CRS tag as a foreign member.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .features
            .iter()
            .map(|f| {
                json!({
                    "type": "Feature",
                    "geometry": f.geometry.to_json(),
                    "properties": Value::Object(f.properties.clone()),
                })
            })
            .collect();
        json!({
            "type": "FeatureCollection",
            "crs_tag": self.crs_tag,
            "features": features,
        })
    }

    pub fn from_geojson(v: &Value) -> Result<VectorLayer> {
        if v.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
            return Err(Error::parse("geojson", "expected a FeatureCollection"));
        }
        let crs_tag = v
            .get("crs_tag")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let features = v
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("geojson", "missing features array"))?
            .iter()
            .map(|f| {
                let geometry = Geometry::from_json(
                    f.get("geometry").ok_or_else(|| Error::parse("geojson", "feature without geometry"))?,
                )?;
                let properties = f
                    .get("properties")
                    .and_then(Value::as_object)
                    .cloned()
                    .unwrap_or_default();
                Ok(Feature {
                    geometry,
                    properties,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorLayer { features, crs_tag })
    }

    pub fn read(path: &Path) -> Result<VectorLayer> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        VectorLayer::from_geojson(&v)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_geojson()).expect("geojson serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
