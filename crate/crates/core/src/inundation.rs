//! Bathtub sea-level-rise masks with hydrologic connectivity.
//!
//! A cell is inundated at height `h` when its elevation is `<= h` and it is
//! reachable from open water through other inundated cells. Open water is
//! either an explicit seed layer or, by default, the nodata cells that clipping
//! to the coastline created along the shore.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    clip_by_polygon, label_components, rasterize_layer, resample_nearest, ClassGrid, Connectivity,
    FloatGrid, GridHeader, Legend, Rgba, VectorLayer, CLASS_NODATA,
};

pub const DRY: u8 = 0;
pub const WET: u8 = 1;

pub fn mask_legend() -> Legend {
    Legend::new()
        .with(DRY, "dry", Rgba([0, 0, 0, 0]))
        .with(WET, "inundated", Rgba([0x1f, 0x5f, 0xbf, 0xff]))
}

/// Where open water enters the study area.
#[derive(Debug, Clone)]
pub enum SeedSource {
    /// Cells marked `true` are water sources.
    Cells(Vec<bool>),
    /// Polygons (by cell center) and points (by containing cell).
    Layer(VectorLayer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlrScenario {
    pub height_m: f64,
    pub mask: ClassGrid,
    pub connectivity: Connectivity,
    pub seed_source: String,
}

impl SlrScenario {
    pub fn inundated_cells(&self) -> usize {
        self.mask.count_of(WET)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub height_m: f64,
    pub inundated_cells: u64,
    pub area_km2: f64,
    pub pct_of_study_area: f64,
    pub study_area_km2: f64,
}

/// `1` where `dem <= h`, `0` above, nodata where the DEM has none.
pub fn threshold_dem(dem: &FloatGrid, h: f64) -> Result<ClassGrid> {
    if !h.is_finite() {
        return Err(Error::InvalidArgument(format!("height {h} is not finite")));
    }
    let nd = dem.header().nodata_value;
    let mut cells = vec![CLASS_NODATA; dem.cells().len()];
    cells
        .par_iter_mut()
        .zip(dem.cells().par_iter())
        .for_each(|(out, &v)| {
            *out = if v == nd {
                CLASS_NODATA
            } else if v <= h {
                WET
            } else {
                DRY
            };
        });
    ClassGrid::new(
        dem.header().with_nodata(CLASS_NODATA as f64),
        cells,
        mask_legend(),
    )
}

fn seed_cells(header: &GridHeader, seeds: &SeedSource) -> Result<Vec<bool>> {
    match seeds {
        SeedSource::Cells(cells) => {
            if cells.len() != header.len() {
                return Err(Error::Alignment(format!(
                    "seed grid has {} cells, mask has {}",
                    cells.len(),
                    header.len()
                )));
            }
            Ok(cells.clone())
        }
        SeedSource::Layer(layer) => rasterize_layer(layer, header),
    }
}

/// Keep only inundated cells connected to a seed.
///
/// A seed cell that is itself wet is kept; wet cells adjacent to any seed cell
/// (wet or not) are reached from it. Connectivity then spreads through wet
/// cells only, so nodata and dry cells block it.
pub fn hydro_connect(
    mask: &ClassGrid,
    seeds: &SeedSource,
    connectivity: Connectivity,
) -> Result<ClassGrid> {
    let header = mask.header();
    let seeds = seed_cells(header, seeds)?;
    if !seeds.iter().any(|&s| s) {
        return Err(Error::NoSeed);
    }
    let (ncols, nrows) = (header.ncols, header.nrows);
    let wet: Vec<bool> = mask.cells().iter().map(|&c| c == WET).collect();
    let (labels, count) = label_components(&wet, ncols, nrows, connectivity);

    let mut reached = vec![false; count];
    for (i, _) in seeds.iter().enumerate().filter(|(_, &s)| s) {
        if wet[i] {
            reached[labels[i] as usize] = true;
        }
        let (r, c) = (i / ncols, i % ncols);
        for &(dr, dc) in connectivity.offsets() {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= nrows as isize || nc >= ncols as isize {
                continue;
            }
            let j = nr as usize * ncols + nc as usize;
            if wet[j] {
                reached[labels[j] as usize] = true;
            }
        }
    }

    let nd = mask.nodata();
    let cells = mask
        .cells()
        .par_iter()
        .zip(labels.par_iter())
        .map(|(&c, &l)| {
            if c == nd {
                nd
            } else if c == WET && reached[l as usize] {
                WET
            } else {
                DRY
            }
        })
        .collect();
    mask.with_cells(cells)
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioOptions {
    pub connectivity: Connectivity,
    /// Overrides the default shoreline seeding.
    pub seeds: Option<VectorLayer>,
}

/// Nodata cells introduced by clipping that share an edge with a data cell.
pub fn shoreline_seeds(original: &FloatGrid, clipped: &FloatGrid) -> Vec<bool> {
    let h = clipped.header();
    let (ncols, nrows) = (h.ncols, h.nrows);
    let mut seeds = vec![false; h.len()];
    for (i, seed) in seeds.iter_mut().enumerate() {
        if original.is_nodata_at(i) || !clipped.is_nodata_at(i) {
            continue;
        }
        let (r, c) = (i / ncols, i % ncols);
        *seed = Connectivity::Four.offsets().iter().any(|&(dr, dc)| {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            nr >= 0
                && nc >= 0
                && nr < nrows as isize
                && nc < ncols as isize
                && !clipped.is_nodata_at(nr as usize * ncols + nc as usize)
        });
    }
    seeds
}

/// Clip, threshold and connect for each height.
pub fn build_scenarios(
    dem: &FloatGrid,
    coastline: &VectorLayer,
    heights: &[f64],
    options: &ScenarioOptions,
) -> Result<Vec<SlrScenario>> {
    if heights.is_empty() {
        return Err(Error::InvalidArgument("no heights given".into()));
    }
    if heights.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::InvalidArgument("heights must be finite and > 0".into()));
    }
    if heights.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("heights must be strictly increasing".into()));
    }
    let clipped = clip_by_polygon(dem, coastline)?;
    let (seeds, seed_source) = match &options.seeds {
        Some(layer) => (SeedSource::Layer(layer.clone()), "explicit seed layer".to_string()),
        None => (
            SeedSource::Cells(shoreline_seeds(dem, &clipped)),
            "coastline-clipped cells adjacent to land".to_string(),
        ),
    };
    heights
        .iter()
        .map(|&h| {
            let raw = threshold_dem(&clipped, h)?;
            let mask = hydro_connect(&raw, &seeds, options.connectivity)?;
            Ok(SlrScenario {
                height_m: h,
                mask,
                connectivity: options.connectivity,
                seed_source: seed_source.clone(),
            })
        })
        .collect()
}

/// Area and share of the study area for a count of inundated cells.
pub fn stats_from_counts(
    height_m: f64,
    inundated_cells: u64,
    cell_size: f64,
    study_area_cells: u64,
) -> Result<ScenarioStats> {
    if study_area_cells == 0 {
        return Err(Error::InvalidArgument("study area has no cells".into()));
    }
    let cell_area = cell_size * cell_size;
    let area_km2 = inundated_cells as f64 * cell_area / 1e6;
    let study_area_km2 = study_area_cells as f64 * cell_area / 1e6;
    Ok(ScenarioStats {
        height_m,
        inundated_cells,
        area_km2,
        pct_of_study_area: 100.0 * area_km2 / study_area_km2,
        study_area_km2,
    })
}

pub fn scenario_stats(s: &SlrScenario, study_area_cells: u64) -> Result<ScenarioStats> {
    stats_from_counts(
        s.height_m,
        s.inundated_cells() as u64,
        s.mask.header().cell_size,
        study_area_cells,
    )
}

/// CSV with the columns height_m, area_km2, pct (plus cell counts).
pub fn write_stats_csv(stats: &[ScenarioStats], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "height_m,area_km2,pct,inundated_cells,study_area_km2").expect("vec write");
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.height_m, s.area_km2, s.pct_of_study_area, s.inundated_cells, s.study_area_km2
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<ScenarioStats>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut lines = text.lines();
    if lines.next() != Some("height_m,area_km2,pct,inundated_cells,study_area_km2") {
        return Err(Error::parse(&ctx, "unexpected stats header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(&ctx, format!("bad row `{line}`")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::parse(&ctx, format!("bad number `{s}`")))
            };
            Ok(ScenarioStats {
                height_m: num(f[0])?,
                area_km2: num(f[1])?,
                pct_of_study_area: num(f[2])?,
                inundated_cells: f[3]
                    .parse()
                    .map_err(|_| Error::parse(&ctx, format!("bad count `{}`", f[3])))?,
                study_area_km2: num(f[4])?,
            })
        })
        .collect()
}

pub const AGREE_DRY: u8 = 0;
pub const AGREE_WET: u8 = 1;
/// Wet only in the other model.
pub const OVER: u8 = 2;
/// Wet only in ours.
pub const UNDER: u8 = 3;

pub fn diff_legend() -> Legend {
    Legend::new()
        .with(AGREE_DRY, "agree dry", Rgba([0, 0, 0, 0]))
        .with(AGREE_WET, "agree wet", Rgba([0x1f, 0x5f, 0xbf, 0xff]))
        .with(OVER, "over (theirs only)", Rgba([0xe0, 0x6c, 0x00, 0xff]))
        .with(UNDER, "under (ours only)", Rgba([0x7b, 0x1f, 0xa2, 0xff]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskDiff {
    pub agree_dry: u64,
    pub both: u64,
    pub only_theirs: u64,
    pub only_ours: u64,
    pub grid: ClassGrid,
}

impl MaskDiff {
    pub fn total(&self) -> u64 {
        self.agree_dry + self.both + self.only_theirs + self.only_ours
    }
}

/// Compare our mask with another model's, resampling theirs onto our grid.
pub fn mask_diff(ours: &ClassGrid, theirs: &ClassGrid) -> Result<MaskDiff> {
    let theirs = if ours.header().is_aligned(theirs.header()) {
        theirs.clone()
    } else {
        resample_nearest(theirs, ours.header())?
    };
    let (nd_o, nd_t) = (ours.nodata(), theirs.nodata());
    let mut counts = [0u64; 4];
    let cells: Vec<u8> = ours
        .cells()
        .iter()
        .zip(theirs.cells())
        .map(|(&o, &t)| {
            if o == nd_o || t == nd_t {
                return CLASS_NODATA;
            }
            let cat = match (o == WET, t == WET) {
                (false, false) => AGREE_DRY,
                (true, true) => AGREE_WET,
                (false, true) => OVER,
                (true, false) => UNDER,
            };
            counts[cat as usize] += 1;
            cat
        })
        .collect();
    let grid = ClassGrid::new(
        ours.header().with_nodata(CLASS_NODATA as f64),
        cells,
        diff_legend(),
    )?;
    Ok(MaskDiff {
        agree_dry: counts[AGREE_DRY as usize],
        both: counts[AGREE_WET as usize],
        only_theirs: counts[OVER as usize],
        only_ours: counts[UNDER as usize],
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Feature, Geometry, Polygon};

    fn header(ncols: usize, nrows: usize) -> GridHeader {
        GridHeader::new(ncols, nrows, 1.0, 0.0, 0.0, "t", -9999.0).unwrap()
    }

    fn mask(rows: &[&str]) -> ClassGrid {
        let h = header(rows[0].len(), rows.len()).with_nodata(255.0);
        let cells = rows
            .iter()
            .flat_map(|r| {
                r.chars().map(|c| match c {
                    '#' => WET,
                    'x' => CLASS_NODATA,
                    _ => DRY,
                })
            })
            .collect();
        ClassGrid::new(h, cells, mask_legend()).unwrap()
    }

    fn column_seeds(ncols: usize, nrows: usize, col: usize) -> SeedSource {
        SeedSource::Cells((0..ncols * nrows).map(|i| i % ncols == col).collect())
    }

    #[test]
    fn threshold_small_example() {
        let dem = FloatGrid::new(header(2, 2), vec![0.5, 1.5, 2.5, 0.8]).unwrap();
        let m = threshold_dem(&dem, 1.0).unwrap();
        assert_eq!(m.cells(), &[1, 0, 0, 1]);
        let m = threshold_dem(&dem, 0.1).unwrap();
        assert_eq!(m.cells(), &[0, 0, 0, 0]);
        // exactly equal is inundated
        let m = threshold_dem(&dem, 0.5).unwrap();
        assert_eq!(m.cells(), &[1, 0, 0, 0]);
        assert!(threshold_dem(&dem, f64::NAN).is_err());
    }

    #[test]
    fn threshold_propagates_nodata() {
        let dem = FloatGrid::new(header(2, 1), vec![-9999.0, 0.0]).unwrap();
        let m = threshold_dem(&dem, 1.0).unwrap();
        assert_eq!(m.cells(), &[CLASS_NODATA, WET]);
    }

    #[test]
    fn inland_pond_is_removed() {
        let m = mask(&["##...", "##.#.", "##..."]);
        let out = hydro_connect(&m, &column_seeds(5, 3, 0), Connectivity::Four).unwrap();
        assert_eq!(out.count_of(WET), 6);
        assert_eq!(out.get(1, 3), Some(DRY));
    }

    #[test]
    fn fully_connected_is_identity() {
        let m = mask(&["###", "#.#", "###"]);
        let out = hydro_connect(&m, &column_seeds(3, 3, 0), Connectivity::Four).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn diagonal_pinch_needs_eight_connectivity() {
        let m = mask(&["#..", ".#.", "..#"]);
        let seeds = SeedSource::Cells(vec![true, false, false, false, false, false, false, false, false]);
        let four = hydro_connect(&m, &seeds, Connectivity::Four).unwrap();
        let eight = hydro_connect(&m, &seeds, Connectivity::Eight).unwrap();
        assert_eq!(four.count_of(WET), 1);
        assert_eq!(eight.count_of(WET), 3);
    }

    #[test]
    fn nodata_blocks_connectivity() {
        let m = mask(&["#x#"]);
        let out = hydro_connect(&m, &column_seeds(3, 1, 0), Connectivity::Eight).unwrap();
        assert_eq!(out.cells(), &[WET, CLASS_NODATA, DRY]);
    }

    #[test]
    fn dry_seed_reaches_wet_neighbours() {
        let m = mask(&[".##", "..."]);
        let seeds = SeedSource::Cells(vec![true, false, false, false, false, false]);
        let out = hydro_connect(&m, &seeds, Connectivity::Four).unwrap();
        assert_eq!(out.count_of(WET), 2);
    }

    #[test]
    fn no_seed_is_error() {
        let m = mask(&["##"]);
        let seeds = SeedSource::Cells(vec![false, false]);
        assert!(matches!(
            hydro_connect(&m, &seeds, Connectivity::Four),
            Err(Error::NoSeed)
        ));
        let outside = VectorLayer::new("t").with_feature(Feature::new(Geometry::Polygon(
            Polygon::rect(50.0, 50.0, 60.0, 60.0),
        )));
        assert!(matches!(
            hydro_connect(&m, &SeedSource::Layer(outside), Connectivity::Four),
            Err(Error::NoSeed)
        ));
    }

    #[test]
    fn seeds_from_polygon_layer() {
        let m = mask(&["##.#"]);
        let layer = VectorLayer::new("t").with_feature(Feature::new(Geometry::Polygon(
            Polygon::rect(0.0, 0.0, 1.0, 1.0),
        )));
        let out = hydro_connect(&m, &SeedSource::Layer(layer), Connectivity::Four).unwrap();
        assert_eq!(out.cells(), &[WET, WET, DRY, DRY]);
    }

    fn coastline_right_of(x: f64) -> VectorLayer {
        VectorLayer::new("t").with_feature(Feature::new(Geometry::Polygon(Polygon::rect(
            x, -1.0, 100.0, 100.0,
        ))))
    }

    #[test]
    fn build_scenarios_seeds_from_clipped_shore() {
        // west column is ocean (clipped away), land rises eastward
        let dem = FloatGrid::from_fn(header(6, 3), |_, c| c as f64 * 0.9).unwrap();
        let scen = build_scenarios(
            &dem,
            &coastline_right_of(1.0),
            &[1.0, 2.0, 3.0, 4.0],
            &ScenarioOptions::default(),
        )
        .unwrap();
        let counts: Vec<usize> = scen.iter().map(SlrScenario::inundated_cells).collect();
        // elevations by column: 0, .9, 1.8, 2.7, 3.6, 4.5 (column 0 clipped)
        assert_eq!(counts, vec![3, 6, 9, 12]);
        assert!(scen
            .iter()
            .all(|s| s.mask.cells().iter().filter(|&&c| c == CLASS_NODATA).count() == 3));
        assert_eq!(scen[0].mask.nodata(), CLASS_NODATA);
        assert_eq!(scen[0].mask.cells()[0], CLASS_NODATA);
    }

    #[test]
    fn build_scenarios_high_land_is_dry() {
        let dem = FloatGrid::from_fn(header(6, 3), |_, c| 10.0 + c as f64).unwrap();
        let scen = build_scenarios(&dem, &coastline_right_of(1.0), &[1.0], &ScenarioOptions::default())
            .unwrap();
        assert_eq!(scen[0].inundated_cells(), 0);
    }

    #[test]
    fn build_scenarios_rejects_bad_heights() {
        let dem = FloatGrid::filled(header(3, 3), 0.0);
        let coast = coastline_right_of(1.0);
        for heights in [vec![2.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![]] {
            assert!(build_scenarios(&dem, &coast, &heights, &ScenarioOptions::default()).is_err());
        }
    }

    #[test]
    fn stats_zero_cells() {
        let s = stats_from_counts(1.0, 0, 1.0, 100).unwrap();
        assert_eq!((s.area_km2, s.pct_of_study_area), (0.0, 0.0));
        assert!(stats_from_counts(1.0, 0, 1.0, 0).is_err());
    }

    #[test]
    fn stats_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        let stats = vec![
            stats_from_counts(1.0, 780_000, 1.0, 150_060_000).unwrap(),
            stats_from_counts(2.0, 1_090_000, 1.0, 150_060_000).unwrap(),
        ];
        write_stats_csv(&stats, &path).unwrap();
        assert_eq!(read_stats_csv(&path).unwrap(), stats);
    }

    #[test]
    fn mask_diff_identical() {
        let m = mask(&["##.", "#.x"]);
        let d = mask_diff(&m, &m).unwrap();
        assert_eq!((d.both, d.agree_dry, d.only_ours, d.only_theirs), (3, 2, 0, 0));
        assert_eq!(d.total(), 5);
    }

    #[test]
    fn mask_diff_coarse_cells_cover_900_fine_cells() {
        let fine_h = GridHeader::new(60, 30, 1.0, 0.0, 0.0, "t", 255.0).unwrap();
        let ours = ClassGrid::filled(fine_h, DRY, mask_legend()).unwrap();
        let coarse_h = GridHeader::new(2, 1, 30.0, 0.0, 0.0, "t", 255.0).unwrap();
        let theirs = ClassGrid::new(coarse_h, vec![WET, DRY], mask_legend()).unwrap();
        let d = mask_diff(&ours, &theirs).unwrap();
        assert_eq!(d.only_theirs, 900);
        assert_eq!(d.agree_dry, 900);
        let far = GridHeader::new(2, 1, 30.0, 1e5, 0.0, "t", 255.0).unwrap();
        let far = ClassGrid::new(far, vec![WET, DRY], mask_legend()).unwrap();
        assert!(matches!(mask_diff(&ours, &far), Err(Error::Extent)));
    }
}
