//! Synthetic fjord study area: a 256×256 grid of 10 m cells with open sea to
//! the west, an inlet reaching east, a river valley, two landlocked ponds and
//! three decades of land-cover change. Everything derives from one seed.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::classify::{lulc_legend, BARE_EARTH, BUILT, GRASSLAND, TREES, WATERBODIES};
use crate::drivers::{distance_from, FeatureSource};
use crate::error::{Error, Result};
use crate::raster::{
    polygonize, write_class_grid, write_float_grid, ClassGrid, Feature, FloatGrid, Geometry,
    GridFormat, GridHeader, Legend, Polygon, Rgba, VectorLayer,
};

pub const NCOLS: usize = 256;
pub const NROWS: usize = 256;
pub const CELL_SIZE: f64 = 10.0;
pub const ORIGIN: (f64, f64) = (490_000.0, 5_460_000.0);
pub const CRS_TAG: &str = "EPSG:26910 NAD 1983 UTM Zone 10N";
pub const DEM_NODATA: f64 = -9999.0;
pub const BAND_NAMES: [&str; 4] = ["blue", "green", "red", "nir"];
pub const YEARS: [i32; 4] = [1991, 2006, 2011, 2021];

pub struct FjordFixture {
    pub dem: FloatGrid,
    pub coastline: VectorLayer,
    pub boundary: VectorLayer,
    pub pois: VectorLayer,
    pub buildings: VectorLayer,
    pub rivers: ClassGrid,
    pub disturbance: ClassGrid,
    pub roads: VectorLayer,
    pub urban: ClassGrid,
    /// Land cover for each of [`YEARS`].
    pub lulc: [ClassGrid; 4],
    pub bands: Vec<FloatGrid>,
    pub training: ClassGrid,
}

pub fn header() -> GridHeader {
    GridHeader::new(NCOLS, NROWS, CELL_SIZE, ORIGIN.0, ORIGIN.1, CRS_TAG, DEM_NODATA).expect("valid header")
}

fn shore(row: f64) -> f64 {
    50.0 + 12.0 * (row / 23.0).sin() + 6.0 * (row / 7.3).sin()
}

fn is_sea(row: usize, col: usize) -> bool {
    let (r, c) = (row as f64, col as f64);
    if c < shore(r) {
        return true;
    }
    // Inlet tapering from 9 cells half-width at the mouth to nothing at col 190.
    let half = 9.0 * (190.0 - c) / (190.0 - shore(128.0));
    (r - 128.0 - 4.0 * (c / 30.0).sin()).abs() < half
}

/// River centerline row for a column east of the inlet head.
fn river_row(col: f64) -> f64 {
    128.0 - (col - 185.0) * 0.9 + 6.0 * (col / 9.0).sin()
}

fn is_river(row: usize, col: usize) -> bool {
    col >= 185 && (row as f64 - river_row(col as f64)).abs() < 1.6
}

/// Round to `places` decimals so files print short.
fn round_to(v: f64, places: i32) -> f64 {
    let k = 10f64.powi(places);
    (v * k).round() / k
}

fn class_grid(cells: Vec<u8>, legend: Legend) -> ClassGrid {
    ClassGrid::new(header().with_nodata(255.0), cells, legend).expect("fixture grid")
}

fn flag_legend() -> Legend {
    Legend::new()
        .with(0, "absent", Rgba([0, 0, 0, 0]))
        .with(1, "present", Rgba([0x40, 0x40, 0x40, 0xff]))
}

fn rect(h: &GridHeader, c0: f64, r0: f64, c1: f64, r1: f64) -> Polygon {
    let x = |c: f64| h.origin_x + c * h.cell_size;
    let y = |r: f64| h.origin_y + (h.nrows as f64 - r) * h.cell_size;
    Polygon::rect(x(c0), y(r1), x(c1), y(r0))
}

impl FjordFixture {
    pub fn generate(seed: u64) -> Result<FjordFixture> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = header();
        let n = h.len();
        let sea: Vec<bool> = (0..n).map(|i| is_sea(i / NCOLS, i % NCOLS)).collect();
        let river: Vec<bool> = (0..n).map(|i| is_river(i / NCOLS, i % NCOLS) && !sea[i]).collect();
        let sea_grid = class_grid(sea.iter().map(|&s| u8::from(s)).collect(), flag_legend());
        let d_sea = distance_from(&FeatureSource::Grid(sea_grid.clone()), &h)?;
        let river_grid = class_grid(river.iter().map(|&s| u8::from(s)).collect(), flag_legend());
        let d_river = distance_from(&FeatureSource::Grid(river_grid.clone()), &h)?;

        let jitter = Normal::new(0.0, 0.05).expect("valid sd");
        let ponds = [(60.0, 150.0, 2.2), (200.0, 215.0, 0.9)];
        let dem_cells: Vec<f64> = (0..n)
            .map(|i| {
                let (r, c) = ((i / NCOLS) as f64, (i % NCOLS) as f64);
                if r < 10.0 && c > 240.0 {
                    return DEM_NODATA;
                }
                let noise = jitter.sample(&mut rng);
                if sea[i] {
                    return round_to(-0.5 - 0.03 * (shore(r) - c).max(0.0) + noise, 3);
                }
                let d = d_sea.cells()[i] / CELL_SIZE;
                let hills = 3.0 * ((c / 31.0).sin() * (r / 27.0).cos()).max(0.0);
                let mut z = 0.2 + 0.25 * d + hills * (d / 30.0).min(1.0);
                // Valley floor along the river, rising gently upstream.
                let dv = d_river.cells()[i] / CELL_SIZE;
                if dv < 6.0 {
                    let floor = 0.6 + 0.02 * (c - 185.0).max(0.0);
                    z = z.min(floor + 0.5 * dv);
                }
                for &(pr, pc, bottom) in &ponds {
                    let dist = ((r - pr).powi(2) + (c - pc).powi(2)).sqrt();
                    let rim = 6.0 * (-((dist - 11.0) / 3.0).powi(2)).exp();
                    z += rim;
                    if dist < 8.0 {
                        z = bottom + 0.1 * dist;
                    }
                }
                round_to(z + noise, 3)
            })
            .collect();
        let dem = FloatGrid::new(h.clone(), dem_cells)?;

        let land = class_grid(sea.iter().map(|&s| u8::from(!s)).collect(), flag_legend());
        let mut coastline = polygonize(&land, 1);
        for f in &mut coastline.features {
            f.properties.insert("name".into(), json!("high tide coastline"));
        }

        let boundary = VectorLayer::new(CRS_TAG).with_feature(
            Feature::new(Geometry::Polygon(rect(&h, 20.0, 4.0, 252.0, 250.0)))
                .with_property("name", "municipal boundary"),
        );

        let mut roads = VectorLayer::new(CRS_TAG);
        let road = |p: Polygon, name: &str| Feature::new(Geometry::Polygon(p)).with_property("name", name);
        roads.features.push(road(rect(&h, 0.0, 69.4, 256.0, 70.6), "east-west arterial"));
        roads.features.push(road(rect(&h, 199.4, 0.0, 200.6, 256.0), "valley road"));
        for k in 0..32 {
            let (r0, r1) = (k as f64 * 8.0, (k + 1) as f64 * 8.0);
            let c = shore((r0 + r1) / 2.0) + 22.0;
            if (r0..r1).contains(&128.0) || (120.0..136.0).contains(&r0) {
                continue;
            }
            roads.features.push(road(rect(&h, c - 0.6, r0, c + 0.6, r1), "shore road"));
        }
        let road_cells = crate::raster::rasterize_layer(&roads, &h)?;
        let d_road = distance_from(&FeatureSource::Layer(roads.clone()), &h)?;

        let disturbance_cells: Vec<u8> = (0..n)
            .map(|i| {
                let (r, c) = ((i / NCOLS) as f64, (i % NCOLS) as f64);
                let quarry = ((r - 40.0) / 6.0).powi(2) + ((c - 225.0) / 9.0).powi(2) < 1.0;
                let cut = ((r - 190.0) / 8.0).powi(2) + ((c - 130.0) / 5.0).powi(2) < 1.0;
                u8::from((quarry || cut) && !sea[i])
            })
            .collect();
        let disturbance = class_grid(disturbance_cells.clone(), flag_legend());

        // 1991 land cover.
        let town = [(95.0, 85.0, 12.0), (160.0, 95.0, 8.0)];
        let mut t1 = vec![TREES; n];
        for i in 0..n {
            let (r, c) = ((i / NCOLS) as f64, (i % NCOLS) as f64);
            let d = d_sea.cells()[i] / CELL_SIZE;
            let in_pond = ponds.iter().any(|&(pr, pc, _)| ((r - pr).powi(2) + (c - pc).powi(2)).sqrt() < 6.0);
            let grass_field = (c / 17.0).sin() * (r / 13.0).sin() > 0.55;
            t1[i] = if sea[i] || river[i] || in_pond {
                WATERBODIES
            } else if disturbance_cells[i] == 1 || d < 1.5 {
                BARE_EARTH
            } else if town.iter().any(|&(tr, tc, rad)| ((r - tr).powi(2) + (c - tc).powi(2)).sqrt() < rad)
                || (road_cells[i] && rng.random_bool(0.5))
            {
                BUILT
            } else if grass_field || d < 8.0 {
                GRASSLAND
            } else {
                TREES
            };
        }
        let urban = class_grid(t1.iter().map(|&c| u8::from(c == BUILT)).collect(), flag_legend());

        let grow = |prev: &[u8], rate: f64, rng: &mut ChaCha8Rng| -> Result<Vec<u8>> {
            let built = class_grid(prev.iter().map(|&c| u8::from(c == BUILT)).collect(), flag_legend());
            let d_urban = distance_from(&FeatureSource::Grid(built), &h)?;
            Ok(prev
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let du = d_urban.cells()[i] / CELL_SIZE;
                    let dr = d_road.cells()[i] / CELL_SIZE;
                    match c {
                        GRASSLAND | TREES => {
                            let p = rate * (-du / 6.0).exp() * (0.3 + 0.7 * (-dr / 5.0).exp());
                            if rng.random_bool(p.min(1.0)) {
                                BUILT
                            } else if c == TREES && rng.random_bool(0.01) {
                                GRASSLAND
                            } else {
                                c
                            }
                        }
                        _ => c,
                    }
                })
                .collect())
        };
        let t2 = grow(&t1, 0.9, &mut rng)?;
        let t3 = grow(&t2, 0.5, &mut rng)?;
        let t4 = grow(&t3, 0.6, &mut rng)?;
        let legend = lulc_legend();
        let lulc = [t1, t2, t3, t4].map(|cells| class_grid(cells, legend.clone()));

        // Four bands with class-specific means.
        let means: [[f64; 4]; 5] = [
            [62.0, 48.0, 30.0, 12.0],
            [40.0, 58.0, 36.0, 120.0],
            [55.0, 80.0, 62.0, 95.0],
            [95.0, 96.0, 100.0, 70.0],
            [120.0, 115.0, 118.0, 90.0],
        ];
        let noise = Normal::new(0.0, 11.0).expect("valid sd");
        let current = &lulc[3];
        let bands = (0..4)
            .map(|b| {
                let cells = current
                    .cells()
                    .iter()
                    .map(|&c| round_to(means[c as usize - 1][b] + noise.sample(&mut rng), 1))
                    .collect();
                FloatGrid::new(h.clone(), cells)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut training = vec![255u8; n];
        for class in 1..=5u8 {
            let cells: Vec<usize> = (0..n).filter(|&i| current.cells()[i] == class).collect();
            for k in rand::seq::index::sample(&mut rng, cells.len(), 60.min(cells.len())) {
                training[cells[k]] = class;
            }
        }
        let training = class_grid(training, legend);

        let poi_specs: [(&str, &str, f64, f64); 9] = [
            ("nature-reserve", "Estuary nature reserve", 140.0, 60.0),
            ("ferry-terminal", "Ferry terminal", 121.0, 62.0),
            ("marina", "Inlet marina", 136.0, 112.0),
            ("town-hall", "Town hall", 95.0, 85.0),
            ("rail-yard", "Waterfront rail yard", 60.0, 58.0),
            ("beach-park", "Beach park", 200.0, 52.0),
            ("treatment-plant", "Water treatment plant", 132.0, 190.0),
            ("school", "Hillside school", 40.0, 150.0),
            ("hospital", "Regional hospital", 170.0, 120.0),
        ];
        let mut pois = VectorLayer::new(CRS_TAG);
        for (id, name, r, c) in poi_specs {
            let (x, y) = h.cell_center(r as usize, c as usize);
            pois.features.push(
                Feature::new(Geometry::Point([x, y]))
                    .with_property("id", id)
                    .with_property("name", name)
                    .with_property("description", format!("{name} on the synthetic fjord shoreline."))
                    .with_property("image", format!("images/{id}.png"))
                    .with_property("link", format!("#{id}")),
            );
        }

        let mut buildings = VectorLayer::new(CRS_TAG);
        for (tr, tc, rad) in town {
            let rad = rad as i32;
            for dr in (-rad..=rad).step_by(4) {
                for dc in (-rad..=rad).step_by(4) {
                    if dr * dr + dc * dc > rad * rad {
                        continue;
                    }
                    let (r, c) = (tr + f64::from(dr), tc + f64::from(dc));
                    buildings.features.push(
                        Feature::new(Geometry::Polygon(rect(&h, c - 0.9, r - 0.9, c + 0.9, r + 0.9)))
                            .with_property("id", buildings.features.len()),
                    );
                }
            }
        }

        // Waterfront sheds a few cells back from the open coast.
        for k in 0..18 {
            let r = 14.0 + 13.0 * k as f64;
            if (112.0..146.0).contains(&r) {
                continue;
            }
            let c = (shore(r) + 4.0).ceil();
            buildings.features.push(
                Feature::new(Geometry::Polygon(rect(&h, c - 0.9, r - 0.9, c + 0.9, r + 0.9)))
                    .with_property("id", buildings.features.len()),
            );
        }

        Ok(FjordFixture {
            dem,
            coastline,
            boundary,
            pois,
            buildings,
            rivers: river_grid,
            disturbance,
            roads,
            urban,
            lulc,
            bands,
            training,
        })
    }

    /// Write every input plus a `config.json` that points at them. Returns the
    /// config path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let asc = GridFormat::EsriAscii;
        write_float_grid(&self.dem, &dir.join("dem.asc"), asc)?;
        self.coastline.write(&dir.join("coastline.geojson"))?;
        self.boundary.write(&dir.join("boundary.geojson"))?;
        self.pois.write(&dir.join("pois.geojson"))?;
        self.buildings.write(&dir.join("buildings.geojson"))?;
        self.roads.write(&dir.join("roads.geojson"))?;
        write_class_grid(&self.rivers, &dir.join("rivers.asc"), asc)?;
        write_class_grid(&self.disturbance, &dir.join("disturbance.asc"), asc)?;
        write_class_grid(&self.urban, &dir.join("urban.asc"), asc)?;
        for (grid, year) in self.lulc.iter().zip(YEARS) {
            write_class_grid(grid, &dir.join(format!("lulc_{year}.asc")), asc)?;
        }
        for (band, name) in self.bands.iter().zip(BAND_NAMES) {
            write_float_grid(band, &dir.join(format!("band_{name}.asc")), asc)?;
        }
        write_class_grid(&self.training, &dir.join("training.asc"), asc)?;
        let config = json!({
            "dem": "dem.asc",
            "coastline": "coastline.geojson",
            "boundary": "boundary.geojson",
            "pois": "pois.geojson",
            "buildings": "buildings.geojson",
            "heights": [1.0, 2.0, 3.0, 4.0],
            "lulc": {
                "t1": "lulc_1991.asc",
                "t2": "lulc_2006.asc",
                "t3": "lulc_2011.asc",
            },
            "years": { "t1": 1991, "t2": 2006, "t3": 2011, "current": 2021 },
            "drivers": {
                "rivers": "rivers.asc",
                "disturbance": "disturbance.asc",
                "roads": "roads.geojson",
                "urban": "urban.asc",
            },
            "classification": {
                "bands": BAND_NAMES.iter().map(|b| format!("band_{b}.asc")).collect::<Vec<_>>(),
                "band_names": BAND_NAMES,
                "training": "training.asc",
                "reference": "lulc_2021.asc",
                "sample_points": 500,
            },
            "projection_targets": [
                { "year": 2100, "slr_m": 1.0 },
                { "year": 2200, "slr_m": 2.0 },
                { "year": 2300, "slr_m": 4.0 },
            ],
            "transition_threshold": 400,
            "mlp": { "samples_per_class": 400, "max_iter": 300 },
            "seed": 1,
            "output_dir": "out",
        });
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(&config).expect("config serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
