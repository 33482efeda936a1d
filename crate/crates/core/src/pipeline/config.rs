use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landchange::{MlpParams, DEFAULT_TRANSITION_THRESHOLD};
use crate::raster::Connectivity;

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "COASTAL_SLR_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dem: PathBuf,
    /// High-tide coastline polygon; land is inside.
    pub coastline: PathBuf,
    /// Explicit ocean seed layer replacing the default shoreline seeding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<PathBuf>,
    #[serde(default)]
    pub connectivity: Connectivity,
    #[serde(default = "default_heights")]
    pub heights: Vec<f64>,
    /// Municipal boundary; the study area defaults to the clipped DEM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pois: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buildings: Option<PathBuf>,
    pub lulc: LulcPaths,
    #[serde(default)]
    pub years: Years,
    pub drivers: DriverPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationConfig>,
    #[serde(default = "default_targets")]
    pub projection_targets: Vec<ProjectionTarget>,
    #[serde(default = "default_threshold")]
    pub transition_threshold: u64,
    #[serde(default)]
    pub mlp: MlpParams,
    /// Seeds training-sample and accuracy-point draws. `mlp.seed` seeds the
    /// network.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LulcPaths {
    pub t1: PathBuf,
    pub t2: PathBuf,
    /// Observed map for validating the projection to `years.t3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<PathBuf>,
    /// Present-day map, used when no classification is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Years {
    pub t1: i32,
    pub t2: i32,
    pub t3: i32,
    pub current: i32,
}

impl Default for Years {
    fn default() -> Self {
        Years { t1: 1991, t2: 2006, t3: 2011, current: 2021 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverPaths {
    pub rivers: PathBuf,
    pub disturbance: PathBuf,
    pub roads: PathBuf,
    pub urban: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationConfig {
    pub bands: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_names: Option<Vec<String>>,
    pub training: PathBuf,
    /// Ground-truth map for the accuracy assessment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default = "default_sample_points")]
    pub sample_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<BTreeMap<u8, f64>>,
}

impl ClassificationConfig {
    pub fn band_names(&self) -> Vec<String> {
        self.band_names
            .clone()
            .unwrap_or_else(|| (1..=self.bands.len()).map(|i| format!("band{i}")).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionTarget {
    pub year: i32,
    /// Expected sea-level rise by that year; must be one of `heights`.
    pub slr_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Style {
    pub mask_color: String,
    pub mask_opacity: f64,
    pub lulc_opacity: f64,
    pub boundary_color: String,
    /// Overlays are downsampled so the long edge stays within this.
    pub max_overlay_px: usize,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            mask_color: "#1f5fbf".into(),
            mask_opacity: 0.6,
            lulc_opacity: 0.7,
            boundary_color: "#333333".into(),
            max_overlay_px: 4096,
        }
    }
}

fn default_heights() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0]
}

fn default_targets() -> Vec<ProjectionTarget> {
    [(2100, 1.0), (2200, 2.0), (2300, 4.0)]
        .into_iter()
        .map(|(year, slr_m)| ProjectionTarget { year, slr_m })
        .collect()
}

fn default_threshold() -> u64 {
    DEFAULT_TRANSITION_THRESHOLD
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sample_points() -> usize {
    500
}

impl PipelineConfig {
    /// Parse, resolve relative paths against the file's directory, apply the
    /// output-directory override and validate.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            config.output_dir = PathBuf::from(dir);
        }
        config.validate()?;
        Ok(config)
    }

    /// Parse only; the error names the offending key path.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(if key == "." { "<root>".to_string() } else { key }, e.into_inner().to_string())
        })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self.paths_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v = vec![&mut self.dem, &mut self.coastline, &mut self.lulc.t1, &mut self.lulc.t2];
        v.extend(
            [&mut self.seeds, &mut self.boundary, &mut self.pois, &mut self.buildings, &mut self.lulc.t3, &mut self.lulc.current]
                .into_iter()
                .filter_map(Option::as_mut),
        );
        let d = &mut self.drivers;
        v.extend([&mut d.rivers, &mut d.disturbance, &mut d.roads, &mut d.urban]);
        if let Some(c) = &mut self.classification {
            v.extend(c.bands.iter_mut());
            v.push(&mut c.training);
            if let Some(r) = &mut c.reference {
                v.push(r);
            }
        }
        v
    }

    /// Input files by config key.
    pub fn input_files(&self) -> Vec<(String, &Path)> {
        let mut v: Vec<(String, &Path)> = vec![
            ("dem".into(), &self.dem),
            ("coastline".into(), &self.coastline),
            ("lulc.t1".into(), &self.lulc.t1),
            ("lulc.t2".into(), &self.lulc.t2),
            ("drivers.rivers".into(), &self.drivers.rivers),
            ("drivers.disturbance".into(), &self.drivers.disturbance),
            ("drivers.roads".into(), &self.drivers.roads),
            ("drivers.urban".into(), &self.drivers.urban),
        ];
        let optional = [
            ("seeds", &self.seeds),
            ("boundary", &self.boundary),
            ("pois", &self.pois),
            ("buildings", &self.buildings),
            ("lulc.t3", &self.lulc.t3),
            ("lulc.current", &self.lulc.current),
        ];
        for (k, p) in optional {
            if let Some(p) = p {
                v.push((k.into(), p));
            }
        }
        if let Some(c) = &self.classification {
            for (i, b) in c.bands.iter().enumerate() {
                v.push((format!("classification.bands[{i}]"), b));
            }
            v.push(("classification.training".into(), &c.training));
            if let Some(r) = &c.reference {
                v.push(("classification.reference".into(), r));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        for (key, path) in self.input_files() {
            if !path.is_file() {
                return Err(Error::config(key, format!("file not found: {}", path.display())));
            }
        }
        if self.heights.is_empty() {
            return Err(Error::config("heights", "at least one height is required"));
        }
        for (i, h) in self.heights.iter().enumerate() {
            if !(h.is_finite() && *h > 0.0) {
                return Err(Error::config(format!("heights[{i}]"), format!("{h} is not a positive height")));
            }
        }
        if let Some(i) = self.heights.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::config(
                format!("heights[{}]", i + 1),
                "heights must be strictly increasing",
            ));
        }
        let y = &self.years;
        if y.t1 >= y.t2 {
            return Err(Error::config("years.t2", "must be after years.t1"));
        }
        if self.lulc.t3.is_some() && y.t3 <= y.t2 {
            return Err(Error::config("years.t3", "must be after years.t2"));
        }
        if self.classification.is_none() && self.lulc.current.is_none() {
            return Err(Error::config("lulc.current", "required when no classification is configured"));
        }
        let mut used = vec![("years.t1", y.t1), ("years.t2", y.t2), ("years.current", y.current)];
        if self.lulc.t3.is_some() {
            used.push(("years.t3", y.t3));
        }
        for (i, (key, year)) in used.iter().enumerate() {
            if used[..i].iter().any(|(_, other)| other == year) {
                return Err(Error::config(*key, format!("{year} is already used by another map")));
            }
        }
        for (i, t) in self.projection_targets.iter().enumerate() {
            if used.iter().any(|(_, year)| *year == t.year)
                || self.projection_targets[..i].iter().any(|o| o.year == t.year)
            {
                return Err(Error::config(format!("projection_targets[{i}].year"), "duplicate year"));
            }
            if t.year <= y.t2 {
                return Err(Error::config(format!("projection_targets[{i}].year"), "must be after years.t2"));
            }
            if !self.heights.contains(&t.slr_m) {
                return Err(Error::config(
                    format!("projection_targets[{i}].slr_m"),
                    format!("{} m is not one of the scenario heights", t.slr_m),
                ));
            }
        }
        self.mlp.validate().map_err(|e| Error::config("mlp", e.to_string()))?;
        if let Some(c) = &self.classification {
            if c.bands.is_empty() {
                return Err(Error::config("classification.bands", "at least one band is required"));
            }
            if let Some(names) = &c.band_names {
                if names.len() != c.bands.len() {
                    return Err(Error::config("classification.band_names", "one name per band"));
                }
            }
        }
        let s = &self.style;
        for (key, v) in [("style.mask_opacity", s.mask_opacity), ("style.lulc_opacity", s.lulc_opacity)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, "opacity must be in [0, 1]"));
            }
        }
        for (key, c) in [("style.mask_color", &s.mask_color), ("style.boundary_color", &s.boundary_color)] {
            crate::raster::Rgba::parse_hex(c).map_err(|e| Error::config(key, e.to_string()))?;
        }
        if s.max_overlay_px == 0 {
            return Err(Error::config("style.max_overlay_px", "must be positive"));
        }
        Ok(())
    }
}
