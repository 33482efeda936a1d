//! The six driver variables for the transition model: elevation, four
//! distance-from-feature rasters and slope.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    rasterize_layer, read_float_grid, resample_nearest, write_float_grid, ClassGrid, FloatGrid,
    GridFormat, GridHeader, VectorLayer,
};

/// Variable names in model order.
pub const DRIVER_NAMES: [&str; 6] = [
    "elevation",
    "dist_rivers",
    "dist_disturbance",
    "dist_roads",
    "dist_urban",
    "slope",
];

/// Human-readable titles, same order as [`DRIVER_NAMES`].
pub const DRIVER_TITLES: [&str; 6] = [
    "Elevation",
    "Distance from Rivers",
    "Distance from Disturbances",
    "Distance From Roads",
    "Distance From Urban Areas",
    "Slope",
];

const DRIVER_NODATA: f64 = -9999.0;

/// Slope in degrees by Horn's 3×3 kernel.
///
/// Border cells and cells with a nodata neighbour become nodata (-9999).
pub fn slope_deg(dem: &FloatGrid) -> Result<FloatGrid> {
    let h = dem.header();
    let (ncols, nrows, cs) = (h.ncols, h.nrows, h.cell_size);
    let mut out = vec![DRIVER_NODATA; h.len()];
    if ncols >= 3 && nrows >= 3 {
        out.par_chunks_mut(ncols)
            .enumerate()
            .skip(1)
            .take(nrows - 2)
            .for_each(|(r, row)| {
                for c in 1..ncols - 1 {
                    let mut z = [0.0; 9];
                    let mut ok = true;
                    for (k, v) in z.iter_mut().enumerate() {
                        match dem.get(r + k / 3 - 1, c + k % 3 - 1) {
                            Some(x) => *v = x,
                            None => ok = false,
                        }
                    }
                    if !ok {
                        continue;
                    }
                    let [a, b, cc, d, _, f, g, hh, i] = z;
                    let dzdx = ((cc + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cs);
                    let dzdy = ((g + 2.0 * hh + i) - (a + 2.0 * b + cc)) / (8.0 * cs);
                    row[c] = dzdx.hypot(dzdy).atan().to_degrees();
                }
            });
    }
    FloatGrid::new(h.with_nodata(DRIVER_NODATA), out)
}

/// Feature input for [`distance_from`].
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// Non-zero data cells are features. Resampled to the base grid if needed.
    Grid(ClassGrid),
    /// Rasterized by cell center (polygons) or containing cell (points).
    Layer(VectorLayer),
}

impl FeatureSource {
    pub fn cells(&self, base: &GridHeader) -> Result<Vec<bool>> {
        match self {
            FeatureSource::Grid(g) => {
                let g = if g.header().is_aligned(base) {
                    g.clone()
                } else {
                    resample_nearest(g, base)?
                };
                Ok(g.cells()
                    .iter()
                    .map(|&c| c != 0 && c != g.nodata())
                    .collect())
            }
            FeatureSource::Layer(l) => rasterize_layer(l, base),
        }
    }
}

/// Exact Euclidean distance in metres from each cell center to the nearest feature cell center.
pub fn distance_from(features: &FeatureSource, base: &GridHeader) -> Result<FloatGrid> {
    let mask = features.cells(base)?;
    let label = match features {
        FeatureSource::Grid(_) => "feature grid".to_string(),
        FeatureSource::Layer(_) => "feature layer".to_string(),
    };
    let sq = squared_edt(&mask, base.ncols, base.nrows).ok_or(Error::EmptyFeature(label))?;
    let cs = base.cell_size;
    FloatGrid::new(
        base.with_nodata(DRIVER_NODATA),
        sq.into_iter().map(|d| (d as f64).sqrt() * cs).collect(),
    )
}

/// Squared distances in cell units, or `None` without any feature.
///
/// Column pass by two scans, then a Felzenszwalb lower envelope per row over
/// the columns that have a feature. All distances are integers, so the result
/// is exact.
pub fn squared_edt(mask: &[bool], ncols: usize, nrows: usize) -> Option<Vec<u64>> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    // vertical distance to the nearest feature in the same column; None if the column has none
    let mut col: Vec<Option<u64>> = vec![None; mask.len()];
    for r in 0..nrows {
        for c in 0..ncols {
            let i = r * ncols + c;
            col[i] = if mask[i] {
                Some(0)
            } else if r > 0 {
                col[i - ncols].map(|d| d + 1)
            } else {
                None
            };
        }
    }
    for r in (0..nrows.saturating_sub(1)).rev() {
        for c in 0..ncols {
            let i = r * ncols + c;
            if let Some(below) = col[i + ncols] {
                col[i] = Some(col[i].map_or(below + 1, |d| d.min(below + 1)));
            }
        }
    }
    let mut out = vec![0u64; mask.len()];
    out.par_chunks_mut(ncols)
        .zip(col.par_chunks(ncols))
        .for_each(|(dst, g)| envelope_row(g, dst));
    Some(out)
}

fn envelope_row(g: &[Option<u64>], dst: &mut [u64]) {
    let f = |q: usize| g[q].map(|d| d * d);
    let mut sites: Vec<usize> = Vec::with_capacity(g.len());
    let mut bounds: Vec<f64> = Vec::with_capacity(g.len());
    for q in 0..g.len() {
        let Some(fq) = f(q) else { continue };
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                break;
            };
            let fv = f(v).expect("site has a value");
            let s = ((fq + (q * q) as u64) as f64 - (fv + (v * v) as u64) as f64)
                / (2.0 * (q - v) as f64);
            if bounds.last().is_some_and(|&b| s <= b) {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    let mut k = 0;
    for (x, d) in dst.iter_mut().enumerate() {
        while k < bounds.len() && bounds[k] < x as f64 {
            k += 1;
        }
        let v = sites[k];
        let dx = x.abs_diff(v) as u64;
        *d = dx * dx + f(v).expect("site has a value");
    }
}

/// Aligned driver grids in [`DRIVER_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverStack {
    grids: Vec<FloatGrid>,
}

/// Feature inputs for the four distance drivers.
#[derive(Debug, Clone, Default)]
pub struct DriverInputs {
    pub rivers: Option<FeatureSource>,
    pub disturbance: Option<FeatureSource>,
    pub roads: Option<FeatureSource>,
    pub urban: Option<FeatureSource>,
}

impl DriverStack {
    pub fn new(grids: Vec<FloatGrid>) -> Result<Self> {
        if grids.len() != DRIVER_NAMES.len() {
            return Err(Error::InvalidArgument(format!(
                "driver stack needs {} grids, got {}",
                DRIVER_NAMES.len(),
                grids.len()
            )));
        }
        for g in &grids[1..] {
            grids[0].header().ensure_aligned(g.header())?;
        }
        Ok(DriverStack { grids })
    }

    pub fn names(&self) -> [&'static str; 6] {
        DRIVER_NAMES
    }

    pub fn header(&self) -> &GridHeader {
        self.grids[0].header()
    }

    pub fn grids(&self) -> &[FloatGrid] {
        &self.grids
    }

    pub fn get(&self, name: &str) -> Option<&FloatGrid> {
        DRIVER_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| &self.grids[i])
    }

    /// All six raw values at a cell, or `None` if any is nodata.
    pub fn sample(&self, index: usize) -> Option<[f64; 6]> {
        let mut v = [0.0; 6];
        for (slot, g) in v.iter_mut().zip(&self.grids) {
            *slot = g.value(index)?;
        }
        Some(v)
    }

    /// Six `.asc` files plus `manifest.json` listing the variable order.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for (i, (name, grid)) in DRIVER_NAMES.iter().zip(&self.grids).enumerate() {
            let file = format!("{name}.asc");
            write_float_grid(grid, &dir.join(&file), GridFormat::EsriAscii)?;
            entries.push(ManifestEntry {
                index: i + 1,
                name: name.to_string(),
                title: DRIVER_TITLES[i].to_string(),
                file,
            });
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&Manifest { variables: entries })
            .expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let names: Vec<&str> = manifest.variables.iter().map(|v| v.name.as_str()).collect();
        if names != DRIVER_NAMES {
            return Err(Error::parse(
                path.display().to_string(),
                format!("variable order {names:?} does not match {DRIVER_NAMES:?}"),
            ));
        }
        let grids = manifest
            .variables
            .iter()
            .map(|v| read_float_grid(&dir.join(&v.file), GridFormat::EsriAscii))
            .collect::<Result<Vec<_>>>()?;
        DriverStack::new(grids)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    variables: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    index: usize,
    name: String,
    title: String,
    file: String,
}

/// Derive all six drivers on the DEM grid. Driver cells are nodata wherever
/// the DEM is. Elevation keeps the DEM sentinel; the others use -9999.
pub fn build_driver_stack(dem: &FloatGrid, inputs: &DriverInputs) -> Result<DriverStack> {
    let base = dem.header();
    let named = [
        ("dist_rivers", &inputs.rivers),
        ("dist_disturbance", &inputs.disturbance),
        ("dist_roads", &inputs.roads),
        ("dist_urban", &inputs.urban),
    ];
    let mut grids = Vec::with_capacity(6);
    grids.push(dem.map(|v| v)?);
    for (name, source) in named {
        let source = source
            .as_ref()
            .ok_or_else(|| Error::MissingLayer(name.to_string()))?;
        let d = distance_from(source, base).map_err(|e| match e {
            Error::EmptyFeature(_) => Error::EmptyFeature(name.to_string()),
            other => other,
        })?;
        grids.push(mask_like(&d, dem)?);
    }
    grids.push(mask_like(&slope_deg(dem)?, dem)?);
    DriverStack::new(grids)
}

fn mask_like(grid: &FloatGrid, dem: &FloatGrid) -> Result<FloatGrid> {
    let nd = grid.header().nodata_value;
    let cells = grid
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &v)| if dem.is_nodata_at(i) { nd } else { v })
        .collect();
    FloatGrid::new(grid.header().clone(), cells)
}
