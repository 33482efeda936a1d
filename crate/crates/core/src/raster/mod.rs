//! Georeferenced grids, vector layers and the operations shared by every
//! other module.
//!
//! Grids are north-up and row-major: row 0 is the northern-most row, and the
//! header origin is the lower-left corner of the lower-left cell.

mod ascii;
mod components;
#[cfg(feature = "geotiff")]
mod geotiff;
mod ops;
mod polygonize;
mod vector;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{label_components, Connectivity};
pub use ops::{clip_by_polygon, cross_tab, rasterize_layer, resample_nearest, CrossTab, Masked};
pub use polygonize::polygonize;
pub use vector::{
    point_in_polygon, ring_signed_area, Coord, Feature, Geometry, Polygon, VectorLayer,
};

/// Default nodata id for categorical grids.
pub const CLASS_NODATA: u8 = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub crs_tag: String,
    pub nodata_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn overlaps(&self, other: &Extent) -> bool {
        self.min_x < other.max_x
            && other.min_x < self.max_x
            && self.min_y < other.max_y
            && other.min_y < self.max_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x < self.max_x && y >= self.min_y && y < self.max_y
    }
}

impl GridHeader {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cell_size: f64,
        origin_x: f64,
        origin_y: f64,
        crs_tag: impl Into<String>,
        nodata_value: f64,
    ) -> Result<Self> {
        let header = GridHeader {
            ncols,
            nrows,
            cell_size,
            origin_x,
            origin_y,
            crs_tag: crs_tag.into(),
            nodata_value,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::parse("grid header", "ncols and nrows must be positive"));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::parse("grid header", "cell_size must be positive"));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::parse("grid header", "origin must be finite"));
        }
        if !self.nodata_value.is_finite() {
            return Err(Error::parse("grid header", "nodata value must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.ncols, index % self.ncols)
    }

    /// Map coordinates of the center of a cell.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + ((self.nrows - row) as f64 - 0.5) * self.cell_size,
        )
    }

    /// Cell containing a map coordinate, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin_x) / self.cell_size).floor();
        let fy = ((y - self.origin_y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.ncols as f64 || fy >= self.nrows as f64 {
            return None;
        }
        let col = fx as usize;
        let row = self.nrows - 1 - fy as usize;
        Some((row, col))
    }

    pub fn extent(&self) -> Extent {
        Extent {
            min_x: self.origin_x,
            min_y: self.origin_y,
            max_x: self.origin_x + self.ncols as f64 * self.cell_size,
            max_y: self.origin_y + self.nrows as f64 * self.cell_size,
        }
    }

    /// Aligned grids share every header field except the nodata sentinel.
    pub fn is_aligned(&self, other: &GridHeader) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.cell_size == other.cell_size
            && self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
            && self.crs_tag == other.crs_tag
    }

    pub fn ensure_aligned(&self, other: &GridHeader) -> Result<()> {
        if self.is_aligned(other) {
            Ok(())
        } else {
            Err(Error::Alignment(format!(
                "{}x{} @ {} ({}, {}) vs {}x{} @ {} ({}, {})",
                self.ncols,
                self.nrows,
                self.cell_size,
                self.origin_x,
                self.origin_y,
                other.ncols,
                other.nrows,
                other.cell_size,
                other.origin_x,
                other.origin_y
            )))
        }
    }

    pub fn with_nodata(&self, nodata_value: f64) -> GridHeader {
        GridHeader {
            nodata_value,
            ..self.clone()
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }
}

/// Continuous single-band raster.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    header: GridHeader,
    cells: Vec<f64>,
}

impl FloatGrid {
    pub fn new(header: GridHeader, cells: Vec<f64>) -> Result<Self> {
        header.validate()?;
        if cells.len() != header.len() {
            return Err(Error::parse(
                "float grid",
                format!("expected {} cells, got {}", header.len(), cells.len()),
            ));
        }
        let nodata = header.nodata_value;
        if let Some(i) = cells.iter().position(|&v| v != nodata && !v.is_finite()) {
            return Err(Error::parse("float grid", format!("non-finite value at cell {i}")));
        }
        Ok(FloatGrid { header, cells })
    }

    pub fn filled(header: GridHeader, value: f64) -> Self {
        let cells = vec![value; header.len()];
        FloatGrid { header, cells }
    }

    pub fn from_fn(header: GridHeader, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut cells = Vec::with_capacity(header.len());
        for row in 0..header.nrows {
            for col in 0..header.ncols {
                cells.push(f(row, col));
            }
        }
        FloatGrid::new(header, cells)
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<f64> {
        self.cells
    }

    #[inline]
    pub fn is_nodata_at(&self, index: usize) -> bool {
        self.cells[index] == self.header.nodata_value
    }

    #[inline]
    pub fn value(&self, index: usize) -> Option<f64> {
        let v = self.cells[index];
        (v != self.header.nodata_value).then_some(v)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.header.nrows || col >= self.header.ncols {
            return None;
        }
        self.value(self.header.index(row, col))
    }

    pub fn nodata_count(&self) -> usize {
        let nd = self.header.nodata_value;
        self.cells.iter().filter(|&&v| v == nd).count()
    }

    pub fn data_count(&self) -> usize {
        self.cells.len() - self.nodata_count()
    }

    /// Min and max over data cells; `None` for an all-nodata grid.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let nd = self.header.nodata_value;
        self.cells
            .iter()
            .filter(|&&v| v != nd)
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Same grid with every cell mapped through `f`; nodata stays nodata.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<FloatGrid> {
        let nd = self.header.nodata_value;
        let cells = self
            .cells
            .iter()
            .map(|&v| if v == nd { nd } else { f(v) })
            .collect();
        FloatGrid::new(self.header.clone(), cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba([0, 0, 0, 0]);

    pub fn parse_hex(s: &str) -> Result<Rgba> {
        let hex = s
            .strip_prefix('#')
            .ok_or_else(|| Error::parse("color", format!("`{s}` must start with #")))?;
        if !(hex.len() == 8 || hex.len() == 6) || !hex.is_ascii() {
            return Err(Error::parse("color", format!("`{s}` is not #RRGGBB[AA]")));
        }
        let byte = |i: usize| {
            u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|_| Error::parse("color", format!("`{s}` is not hexadecimal")))
        };
        let alpha = if hex.len() == 8 { byte(6)? } else { 255 };
        Ok(Rgba([byte(0)?, byte(2)?, byte(4)?, alpha]))
    }

    pub fn with_alpha(self, alpha: u8) -> Rgba {
        let [r, g, b, _] = self.0;
        Rgba([r, g, b, alpha])
    }
}

impl fmt::Display for Rgba {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b, a] = self.0;
        write!(f, "#{r:02X}{g:02X}{b:02X}{a:02X}")
    }
}

impl Serialize for Rgba {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rgba {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Rgba::parse_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub color: Rgba,
}

/// Class id → display name and color.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Legend(BTreeMap<u8, ClassInfo>);

impl Legend {
    pub fn new() -> Self {
        Legend(BTreeMap::new())
    }

    pub fn with(mut self, id: u8, name: &str, color: Rgba) -> Self {
        self.insert(id, name, color);
        self
    }

    pub fn insert(&mut self, id: u8, name: &str, color: Rgba) {
        self.0.insert(
            id,
            ClassInfo {
                name: name.to_string(),
                color,
            },
        );
    }

    pub fn get(&self, id: u8) -> Option<&ClassInfo> {
        self.0.get(&id)
    }

    pub fn contains(&self, id: u8) -> bool {
        self.0.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &ClassInfo)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sidecar text: one `id<TAB>name<TAB>#RRGGBBAA` line per class.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        for (id, info) in &self.0 {
            out.push_str(&format!("{id}\t{}\t{}\n", info.name, info.color));
        }
        out
    }

    pub fn parse_sidecar(text: &str) -> Result<Legend> {
        let mut legend = Legend::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::parse(
                    "legend",
                    format!("line {}: expected 3 tab-separated fields", lineno + 1),
                ));
            }
            let id: u8 = parts[0].trim().parse().map_err(|_| {
                Error::parse("legend", format!("line {}: bad class id", lineno + 1))
            })?;
            let color = Rgba::parse_hex(parts[2].trim())?;
            legend.insert(id, parts[1], color);
        }
        Ok(legend)
    }

    /// Fallback legend for grids read without a sidecar.
    pub fn generic(ids: impl IntoIterator<Item = u8>) -> Legend {
        const PALETTE: [[u8; 3]; 8] = [
            [0x1f, 0x77, 0xb4],
            [0x2c, 0xa0, 0x2c],
            [0xd6, 0x27, 0x28],
            [0xff, 0x7f, 0x0e],
            [0x94, 0x67, 0xbd],
            [0x8c, 0x56, 0x4b],
            [0xe3, 0x77, 0xc2],
            [0x7f, 0x7f, 0x7f],
        ];
        let mut legend = Legend::new();
        for id in ids {
            let [r, g, b] = PALETTE[id as usize % PALETTE.len()];
            legend.insert(id, &format!("class {id}"), Rgba([r, g, b, 255]));
        }
        legend
    }
}

/// Categorical raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGrid {
    header: GridHeader,
    cells: Vec<u8>,
    legend: Legend,
}

impl ClassGrid {
    pub fn new(header: GridHeader, cells: Vec<u8>, legend: Legend) -> Result<Self> {
        header.validate()?;
        let nodata = class_nodata(&header)?;
        if cells.len() != header.len() {
            return Err(Error::parse(
                "class grid",
                format!("expected {} cells, got {}", header.len(), cells.len()),
            ));
        }
        let mut seen = [false; 256];
        for &c in &cells {
            seen[c as usize] = true;
        }
        for (id, present) in seen.iter().enumerate() {
            let id = id as u8;
            if *present && id != nodata && !legend.contains(id) {
                return Err(Error::parse(
                    "class grid",
                    format!("class id {id} is not in the legend"),
                ));
            }
        }
        Ok(ClassGrid {
            header,
            cells,
            legend,
        })
    }

    pub fn filled(header: GridHeader, value: u8, legend: Legend) -> Result<Self> {
        let cells = vec![value; header.len()];
        ClassGrid::new(header, cells, legend)
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn into_parts(self) -> (GridHeader, Vec<u8>, Legend) {
        (self.header, self.cells, self.legend)
    }

    #[inline]
    pub fn nodata(&self) -> u8 {
        self.header.nodata_value as u8
    }

    #[inline]
    pub fn is_nodata_at(&self, index: usize) -> bool {
        self.cells[index] == self.nodata()
    }

    #[inline]
    pub fn value(&self, index: usize) -> Option<u8> {
        let v = self.cells[index];
        (v != self.nodata()).then_some(v)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        if row >= self.header.nrows || col >= self.header.ncols {
            return None;
        }
        self.value(self.header.index(row, col))
    }

    pub fn count_of(&self, class_id: u8) -> usize {
        if class_id == self.nodata() {
            return 0;
        }
        self.cells.iter().filter(|&&c| c == class_id).count()
    }

    pub fn data_count(&self) -> usize {
        let nd = self.nodata();
        self.cells.iter().filter(|&&c| c != nd).count()
    }

    /// Same header and legend, new cells.
    pub fn with_cells(&self, cells: Vec<u8>) -> Result<ClassGrid> {
        ClassGrid::new(self.header.clone(), cells, self.legend.clone())
    }
}

fn class_nodata(header: &GridHeader) -> Result<u8> {
    let nd = header.nodata_value;
    if nd.fract() != 0.0 || !(0.0..=255.0).contains(&nd) {
        return Err(Error::parse(
            "class grid",
            format!("nodata value {nd} is not a u8 class id"),
        ));
    }
    Ok(nd as u8)
}

/// Either kind of grid, as returned by [`read_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Float(FloatGrid),
    Class(ClassGrid),
}

impl Grid {
    pub fn header(&self) -> &GridHeader {
        match self {
            Grid::Float(g) => g.header(),
            Grid::Class(g) => g.header(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    EsriAscii,
    GeoTiff,
}

impl GridFormat {
    pub fn from_path(path: &Path) -> Result<GridFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("asc") | Some("txt") => Ok(GridFormat::EsriAscii),
            Some("tif") | Some("tiff") => Ok(GridFormat::GeoTiff),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

/// Sidecar next to a grid file: `dem.asc` → `dem.legend`.
pub fn legend_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("legend")
}

pub fn prj_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("prj")
}

/// Read a grid; it comes back as a [`ClassGrid`] when a legend sidecar exists.
pub fn read_grid(path: &Path, format: GridFormat) -> Result<Grid> {
    if legend_sidecar_path(path).exists() {
        read_class_grid(path, format).map(Grid::Class)
    } else {
        read_float_grid(path, format).map(Grid::Float)
    }
}

pub fn read_float_grid(path: &Path, format: GridFormat) -> Result<FloatGrid> {
    match format {
        GridFormat::EsriAscii => {
            let (header, cells) = ascii::read(path)?;
            FloatGrid::new(header, cells)
        }
        GridFormat::GeoTiff => read_tiff_float(path),
    }
}

/// Read a categorical grid. Without a legend sidecar a generic legend is
/// synthesized from the ids present.
pub fn read_class_grid(path: &Path, format: GridFormat) -> Result<ClassGrid> {
    let (header, values) = match format {
        GridFormat::EsriAscii => ascii::read(path)?,
        GridFormat::GeoTiff => {
            let g = read_tiff_float(path)?;
            let header = g.header().clone();
            (header, g.into_cells())
        }
    };
    let context = path.display().to_string();
    let nodata = class_nodata(&header)?;
    let mut cells = Vec::with_capacity(values.len());
    for v in values {
        if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
            return Err(Error::parse(&context, format!("value {v} is not a class id")));
        }
        cells.push(v as u8);
    }
    let sidecar = legend_sidecar_path(path);
    let legend = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Legend::parse_sidecar(&text)?
    } else {
        let mut seen = [false; 256];
        for &c in &cells {
            seen[c as usize] = true;
        }
        Legend::generic(
            (0..=255u8).filter(|&id| seen[id as usize] && id != nodata),
        )
    };
    ClassGrid::new(header, cells, legend)
}

pub fn write_float_grid(grid: &FloatGrid, path: &Path, format: GridFormat) -> Result<()> {
    match format {
        GridFormat::EsriAscii => ascii::write(path, grid.header(), grid.cells().iter().copied()),
        GridFormat::GeoTiff => write_tiff_float(grid, path),
    }
}

/// Writes the grid plus its legend sidecar.
pub fn write_class_grid(grid: &ClassGrid, path: &Path, format: GridFormat) -> Result<()> {
    match format {
        GridFormat::EsriAscii => ascii::write(
            path,
            grid.header(),
            grid.cells().iter().map(|&c| c as f64),
        )?,
        GridFormat::GeoTiff => write_tiff_class(grid, path)?,
    }
    let sidecar = legend_sidecar_path(path);
    std::fs::write(&sidecar, grid.legend().to_sidecar()).map_err(|e| Error::io(&sidecar, e))
}

pub fn write_grid(grid: &Grid, path: &Path, format: GridFormat) -> Result<()> {
    match grid {
        Grid::Float(g) => write_float_grid(g, path, format),
        Grid::Class(g) => write_class_grid(g, path, format),
    }
}

#[cfg(feature = "geotiff")]
fn read_tiff_float(path: &Path) -> Result<FloatGrid> {
    geotiff::read(path)
}

#[cfg(not(feature = "geotiff"))]
fn read_tiff_float(_path: &Path) -> Result<FloatGrid> {
    Err(Error::UnsupportedFormat(
        "GeoTIFF support requires the `geotiff` feature".into(),
    ))
}

#[cfg(feature = "geotiff")]
fn write_tiff_float(grid: &FloatGrid, path: &Path) -> Result<()> {
    geotiff::write_float(grid, path)
}

#[cfg(not(feature = "geotiff"))]
fn write_tiff_float(_grid: &FloatGrid, _path: &Path) -> Result<()> {
    Err(Error::UnsupportedFormat(
        "GeoTIFF support requires the `geotiff` feature".into(),
    ))
}

#[cfg(feature = "geotiff")]
fn write_tiff_class(grid: &ClassGrid, path: &Path) -> Result<()> {
    geotiff::write_class(grid, path)
}

#[cfg(not(feature = "geotiff"))]
fn write_tiff_class(_grid: &ClassGrid, _path: &Path) -> Result<()> {
    Err(Error::UnsupportedFormat(
        "GeoTIFF support requires the `geotiff` feature".into(),
    ))
}
