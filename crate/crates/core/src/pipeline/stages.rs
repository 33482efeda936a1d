use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::StageRecord;
use super::catalog;
use super::config::PipelineConfig;
use super::Stage;
use crate::classify::{
    assess, fit_signatures, lulc_under_slr, stratified_sample, write_signatures, BandStack, ClassShare,
    MaxLikelihood,
};
use crate::drivers::{build_driver_stack, DriverInputs, DriverStack, FeatureSource};
use crate::error::{Error, Result};
use crate::inundation::{
    build_scenarios, stats_from_counts, write_stats_csv, ScenarioOptions, SlrScenario, WET,
};
use crate::landchange::{
    all_but_one_csv, allocate, build_training_set, change_analysis, class_counts, class_skill_csv,
    forced_constant_csv, mark_transitions, markov_from_crosstab, parameters_csv, project_markov,
    train_mlp, transition_potential, validate_three_map, variable_influence, MarkovMatrix, MlpModel,
    Shortfall, TransitionSpec,
};
use crate::raster::{
    clip_by_polygon, polygonize, rasterize_layer, read_class_grid, read_float_grid, resample_nearest,
    write_class_grid, write_float_grid, ClassGrid, Feature, FloatGrid, GridFormat, Legend, Masked, Rgba,
    VectorLayer,
};

const ASC: GridFormat = GridFormat::EsriAscii;

pub(super) struct Ctx<'a> {
    pub config: &'a PipelineConfig,
    pub out: &'a Path,
    pub records: &'a BTreeMap<Stage, StageRecord>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }
}

/// `1` for 1 m, `2.5` for 2.5 m.
pub fn height_label(h: f64) -> String {
    format!("{h}")
}

/// Mask grid of a scenario, relative to the output directory.
pub fn mask_path(h: f64) -> String {
    format!("scenarios/mask_{}m.asc", height_label(h))
}

pub fn polygons_path(h: f64) -> String {
    format!("scenarios/mask_{}m.geojson", height_label(h))
}

pub(super) fn lulc_path(year: i32) -> String {
    format!("lulc/lulc_{year}.asc")
}

pub(super) fn projected_path(year: i32) -> String {
    format!("projections/lulc_{year}.asc")
}

fn transition_dir(stage: &str, spec: &TransitionSpec) -> String {
    format!("{stage}/{}_to_{}", spec.from_class, spec.to_class)
}

pub(super) fn potential_path(spec: &TransitionSpec) -> String {
    format!("{}/potential.asc", transition_dir("mlp", spec))
}

fn model_path(spec: &TransitionSpec) -> String {
    format!("{}/model.txt", transition_dir("mlp", spec))
}

pub(super) const TRANSITIONS_JSON: &str = "change/transitions.json";
pub(super) const STATS_CSV: &str = "stats/scenario_stats.csv";
pub(super) const STUDY_AREA: &str = "ingest/study_area.asc";

fn read_any_float(path: &Path) -> Result<FloatGrid> {
    read_float_grid(path, GridFormat::from_path(path)?)
}

fn read_any_class(path: &Path) -> Result<ClassGrid> {
    read_class_grid(path, GridFormat::from_path(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn write_class(path: &Path, grid: &ClassGrid) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_class_grid(grid, path, ASC)
}

/// Stage parameters that feed the cache key.
pub(super) fn params(stage: Stage, c: &PipelineConfig) -> Value {
    let years = &c.years;
    match stage {
        Stage::Ingest | Stage::Stats | Stage::Drivers => json!({}),
        Stage::Scenarios => json!({ "heights": c.heights, "connectivity": c.connectivity }),
        Stage::Classify => {
            let k = c.classification.as_ref().expect("enabled");
            json!({ "band_names": k.band_names(), "priors": k.priors })
        }
        Stage::Assess => {
            let k = c.classification.as_ref().expect("enabled");
            json!({ "sample_points": k.sample_points, "seed": c.seed })
        }
        Stage::Lulc => json!({ "years": years, "t3": c.lulc.t3.is_some(), "classified": c.classification.is_some() }),
        Stage::Change => json!({ "threshold": c.transition_threshold, "t1": years.t1, "t2": years.t2 }),
        Stage::Mlp | Stage::Influence => json!({ "mlp": c.mlp, "seed": c.seed, "t1": years.t1, "t2": years.t2 }),
        Stage::Markov => json!({ "t1": years.t1, "t2": years.t2 }),
        Stage::Projections => json!({
            "t2": years.t2,
            "t3": c.lulc.t3.as_ref().map(|_| years.t3),
            "targets": c.projection_targets,
        }),
        Stage::Validation => json!({ "t2": years.t2, "t3": years.t3 }),
        Stage::Catalog => json!({
            "style": c.style,
            "years": years,
            "heights": c.heights,
            "targets": c.projection_targets,
        }),
    }
}

/// Files read directly from the configuration, by config key.
pub(super) fn inputs(stage: Stage, c: &PipelineConfig) -> Vec<(String, PathBuf)> {
    let mut v: Vec<(String, PathBuf)> = Vec::new();
    let mut push = |k: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            v.push((k.to_string(), p.clone()));
        }
    };
    match stage {
        Stage::Ingest => {
            push("dem", &Some(c.dem.clone()));
            push("coastline", &Some(c.coastline.clone()));
            push("boundary", &c.boundary);
        }
        Stage::Scenarios => push("seeds", &c.seeds),
        Stage::Stats => push("buildings", &c.buildings),
        Stage::Classify => {
            let k = c.classification.as_ref().expect("enabled");
            for (i, b) in k.bands.iter().enumerate() {
                push(&format!("classification.bands[{i}]"), &Some(b.clone()));
            }
            push("classification.training", &Some(k.training.clone()));
        }
        Stage::Assess => push("classification.reference", &c.classification.as_ref().and_then(|k| k.reference.clone())),
        Stage::Lulc => {
            push("lulc.t1", &Some(c.lulc.t1.clone()));
            push("lulc.t2", &Some(c.lulc.t2.clone()));
            push("lulc.t3", &c.lulc.t3);
            if c.classification.is_none() {
                push("lulc.current", &c.lulc.current);
            }
        }
        Stage::Drivers => {
            let d = &c.drivers;
            push("drivers.rivers", &Some(d.rivers.clone()));
            push("drivers.disturbance", &Some(d.disturbance.clone()));
            push("drivers.roads", &Some(d.roads.clone()));
            push("drivers.urban", &Some(d.urban.clone()));
        }
        Stage::Catalog => push("pois", &c.pois),
        _ => {}
    }
    v
}

pub(super) fn run(stage: Stage, cx: &Ctx) -> Result<()> {
    match stage {
        Stage::Ingest => ingest(cx),
        Stage::Scenarios => scenarios(cx),
        Stage::Stats => stats(cx),
        Stage::Classify => classify(cx),
        Stage::Assess => assess_stage(cx),
        Stage::Lulc => lulc(cx),
        Stage::Drivers => drivers(cx),
        Stage::Change => change(cx),
        Stage::Mlp => mlp(cx),
        Stage::Influence => influence(cx),
        Stage::Markov => markov(cx),
        Stage::Projections => projections(cx),
        Stage::Validation => validation(cx),
        Stage::Catalog => catalog::build(cx),
    }
}

fn study_area_legend() -> Legend {
    Legend::new()
        .with(0, "outside", Rgba::TRANSPARENT)
        .with(1, "study area", Rgba([0x33, 0x33, 0x33, 0xff]))
}

fn ingest(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let dem = read_any_float(&c.dem)?;
    let coast = VectorLayer::read(&c.coastline)?;
    let clipped = clip_by_polygon(&dem, &coast)?;
    if clipped.data_count() == 0 {
        return Err(Error::Extent);
    }
    let h = dem.header();
    let mut area: Vec<bool> = (0..h.len()).map(|i| !clipped.is_nodata_at(i)).collect();
    if let Some(path) = &c.boundary {
        let boundary = VectorLayer::read(path)?;
        let inside = rasterize_layer(&boundary, h)?;
        area.iter_mut().zip(inside).for_each(|(a, b)| *a &= b);
        boundary.write(&cx.path("ingest/boundary.geojson"))?;
    }
    if !area.contains(&true) {
        return Err(Error::Extent);
    }
    write_float_grid(&dem, &cx.path("ingest/dem.asc"), ASC)?;
    write_float_grid(&clipped, &cx.path("ingest/dem_clipped.asc"), ASC)?;
    coast.write(&cx.path("ingest/coastline.geojson"))?;
    let study = ClassGrid::new(
        h.with_nodata(f64::from(crate::raster::CLASS_NODATA)),
        area.iter().map(|&a| u8::from(a)).collect(),
        study_area_legend(),
    )?;
    write_class(&cx.path(STUDY_AREA), &study)
}

fn scenarios(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let dem = read_float_grid(&cx.path("ingest/dem.asc"), ASC)?;
    let coast = VectorLayer::read(&cx.path("ingest/coastline.geojson"))?;
    let seeds = c.seeds.as_deref().map(VectorLayer::read).transpose()?;
    let options = ScenarioOptions { connectivity: c.connectivity, seeds };
    let scenarios = build_scenarios(&dem, &coast, &c.heights, &options)?;
    let mut summary = Vec::new();
    for s in &scenarios {
        write_class(&cx.path(&mask_path(s.height_m)), &s.mask)?;
        let mut layer = polygonize(&s.mask, WET);
        for f in &mut layer.features {
            let area_km2 = f.geometry.area() / 1e6;
            f.properties.insert("height_m".into(), json!(s.height_m));
            f.properties.insert("area_km2".into(), json!(area_km2));
        }
        layer.write(&cx.path(&polygons_path(s.height_m)))?;
        summary.push(json!({
            "height_m": s.height_m,
            "inundated_cells": s.inundated_cells(),
            "connectivity": s.connectivity,
            "seed_source": s.seed_source,
        }));
    }
    write_json(&cx.path("scenarios/scenarios.json"), &summary)
}

fn read_study_area(cx: &Ctx) -> Result<Vec<bool>> {
    let study = read_class_grid(&cx.path(STUDY_AREA), ASC)?;
    Ok(study.cells().iter().map(|&v| v == 1).collect())
}

/// A scenario mask with wet cells outside the study area set dry.
fn study_mask(cx: &Ctx, h: f64, study: &[bool]) -> Result<SlrScenario> {
    let mask = read_class_grid(&cx.path(&mask_path(h)), ASC)?;
    let cells = mask
        .cells()
        .iter()
        .zip(study)
        .map(|(&v, &inside)| if v == WET && !inside { 0 } else { v })
        .collect();
    Ok(SlrScenario {
        height_m: h,
        mask: mask.with_cells(cells)?,
        connectivity: cx.config.connectivity,
        seed_source: String::new(),
    })
}

fn stats(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let study = read_study_area(cx)?;
    let study_cells = study.iter().filter(|&&s| s).count() as u64;
    let mut rows = Vec::new();
    let mut masks = Vec::new();
    for &h in &c.heights {
        let s = study_mask(cx, h, &study)?;
        let cell_size = s.mask.header().cell_size;
        rows.push(stats_from_counts(h, s.inundated_cells() as u64, cell_size, study_cells)?);
        masks.push(s);
    }
    write_stats_csv(&rows, &cx.path(STATS_CSV))?;
    if let Some(path) = &c.buildings {
        let buildings = VectorLayer::read(path)?;
        let header = masks[0].mask.header();
        let footprints = buildings
            .features
            .iter()
            .map(|f| footprint_cells(f, &buildings.crs_tag, header))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = String::from("height_m,buildings,inundated,pct\n");
        for s in &masks {
            let wet = footprints
                .iter()
                .filter(|cells| cells.iter().any(|&i| s.mask.cells()[i] == WET))
                .count();
            let total = footprints.len();
            let pct = if total == 0 { 0.0 } else { 100.0 * wet as f64 / total as f64 };
            writeln!(csv, "{},{total},{wet},{pct}", s.height_m).expect("string write");
        }
        write_text(&cx.path("stats/buildings.csv"), &csv)?;
    }
    Ok(())
}

/// Cells whose centers fall in a footprint; a footprint smaller than a cell
/// takes the cell under its first vertex.
fn footprint_cells(f: &Feature, crs: &str, header: &crate::raster::GridHeader) -> Result<Vec<usize>> {
    let layer = VectorLayer::new(crs).with_feature(f.clone());
    let inside = rasterize_layer(&layer, header)?;
    let mut cells: Vec<usize> = inside.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    if cells.is_empty() {
        let first = f.geometry.polygons().first().and_then(|p| p.exterior.first().copied());
        if let Some((r, c)) = first.and_then(|[x, y]| header.cell_at(x, y)) {
            cells.push(header.index(r, c));
        }
    }
    Ok(cells)
}

fn classify(cx: &Ctx) -> Result<()> {
    let k = cx.config.classification.as_ref().expect("enabled");
    let bands = k.bands.iter().map(|p| read_any_float(p)).collect::<Result<Vec<_>>>()?;
    let names = k.band_names();
    let stack = BandStack::new(names.clone(), bands)?;
    let training = read_any_class(&k.training)?;
    let signatures = fit_signatures(&stack, &training)?;
    let model = MaxLikelihood::new(&signatures, k.priors.as_ref())?;
    let classified = model.classify(&stack, training.legend())?;
    write_class(&cx.path("classify/lulc_classified.asc"), &classified)?;
    write_signatures(&signatures, &names, &cx.path("classify/signatures.txt"))
}

fn assess_stage(cx: &Ctx) -> Result<()> {
    let k = cx.config.classification.as_ref().expect("enabled");
    let predicted = read_class_grid(&cx.path("classify/lulc_classified.asc"), ASC)?;
    let mut reference = read_any_class(k.reference.as_ref().expect("enabled"))?;
    if !reference.header().is_aligned(predicted.header()) {
        reference = resample_nearest(&reference, predicted.header())?;
    }
    // Only sample where the classification has a value.
    let valid: Vec<bool> = (0..predicted.cells().len()).map(|i| !predicted.is_nodata_at(i)).collect();
    let reference = reference.keep_only(&valid);
    let points = stratified_sample(&reference, k.sample_points, cx.config.seed)?;
    let assessment = assess(&predicted, &points)?;
    let legend = reference.legend();
    write_text(&cx.path("assess/accuracy.csv"), &assessment.to_csv(legend))?;
    write_text(&cx.path("assess/accuracy.txt"), &assessment.report_text(legend))?;
    let mut csv = String::from("row,col,x,y,reference,predicted\n");
    for p in &points {
        let predicted = predicted.get(p.row, p.col).expect("sampled on data");
        writeln!(csv, "{},{},{},{},{},{predicted}", p.row, p.col, p.x, p.y, p.reference).expect("string write");
    }
    write_text(&cx.path("assess/sample_points.csv"), &csv)
}

fn shares_csv(rows: &[(f64, Vec<ClassShare>)]) -> String {
    let mut csv = String::from("height_m,class_id,class_name,cells,pct\n");
    for (h, shares) in rows {
        for s in shares {
            writeln!(csv, "{h},{},{},{},{}", s.class_id, s.name, s.cells, s.pct).expect("string write");
        }
    }
    csv
}

fn lulc(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let y = &c.years;
    let dem = read_float_grid(&cx.path("ingest/dem.asc"), ASC)?;
    let coast = VectorLayer::read(&cx.path("ingest/coastline.geojson"))?;
    let normalize = |grid: ClassGrid| -> Result<ClassGrid> {
        let grid = if grid.header().is_aligned(dem.header()) {
            grid
        } else {
            resample_nearest(&grid, dem.header())?
        };
        clip_by_polygon(&grid, &coast)
    };
    let mut maps = vec![(y.t1, read_any_class(&c.lulc.t1)?), (y.t2, read_any_class(&c.lulc.t2)?)];
    if let Some(t3) = &c.lulc.t3 {
        maps.push((y.t3, read_any_class(t3)?));
    }
    let current = if c.classification.is_some() {
        read_class_grid(&cx.path("classify/lulc_classified.asc"), ASC)?
    } else {
        read_any_class(c.lulc.current.as_ref().expect("validated"))?
    };
    maps.push((y.current, current));
    let mut current = None;
    for (year, grid) in maps {
        let grid = normalize(grid)?;
        write_class(&cx.path(&lulc_path(year)), &grid)?;
        if year == y.current {
            current = Some(grid);
        }
    }
    let current = current.expect("current map written");
    let study = read_study_area(cx)?;
    let rows = c
        .heights
        .iter()
        .map(|&h| Ok((h, lulc_under_slr(&current, &study_mask(cx, h, &study)?)?)))
        .collect::<Result<Vec<_>>>()?;
    write_text(&cx.path("lulc/lulc_under_slr.csv"), &shares_csv(&rows))
}

fn feature_source(path: &Path) -> Result<FeatureSource> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
    if ext == "geojson" || ext == "json" {
        Ok(FeatureSource::Layer(VectorLayer::read(path)?))
    } else {
        Ok(FeatureSource::Grid(read_any_class(path)?))
    }
}

fn drivers(cx: &Ctx) -> Result<()> {
    let d = &cx.config.drivers;
    let dem = read_float_grid(&cx.path("ingest/dem_clipped.asc"), ASC)?;
    let inputs = DriverInputs {
        rivers: Some(feature_source(&d.rivers)?),
        disturbance: Some(feature_source(&d.disturbance)?),
        roads: Some(feature_source(&d.roads)?),
        urban: Some(feature_source(&d.urban)?),
    };
    build_driver_stack(&dem, &inputs)?.save(&cx.path("drivers"))
}

fn calibration_maps(cx: &Ctx) -> Result<(ClassGrid, ClassGrid)> {
    let y = &cx.config.years;
    Ok((
        read_class_grid(&cx.path(&lulc_path(y.t1)), ASC)?,
        read_class_grid(&cx.path(&lulc_path(y.t2)), ASC)?,
    ))
}

fn class_name(legend: &Legend, id: u8) -> String {
    legend.get(id).map_or_else(|| format!("class {id}"), |c| c.name.clone())
}

fn change(cx: &Ctx) -> Result<()> {
    let (t1, t2) = calibration_maps(cx)?;
    let analysis = change_analysis(&t1, &t2)?;
    let legend = t1.legend();
    let rows = analysis.table.row_sums();
    let cols = analysis.table.col_sums();
    let mut csv = String::from("class_id,class_name,t1_cells,t2_cells,gain,loss,persistence,net\n");
    for (i, &id) in analysis.table.classes.iter().enumerate() {
        let net = analysis.gains[i] as i64 - analysis.losses[i] as i64;
        writeln!(
            csv,
            "{id},{},{},{},{},{},{},{net}",
            class_name(legend, id),
            rows[i],
            cols[i],
            analysis.gains[i],
            analysis.losses[i],
            analysis.persistence[i]
        )
        .expect("string write");
    }
    write_text(&cx.path("change/change_analysis.csv"), &csv)?;
    let specs = mark_transitions(&analysis.transitions, cx.config.transition_threshold);
    let mut csv = String::from("from_class,from_name,to_class,to_name,cells,included\n");
    for s in &specs {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.from_class,
            class_name(legend, s.from_class),
            s.to_class,
            class_name(legend, s.to_class),
            s.cell_count,
            s.included
        )
        .expect("string write");
    }
    write_text(&cx.path("change/transitions.csv"), &csv)?;
    write_json(&cx.path(TRANSITIONS_JSON), &specs)?;
    if !specs.iter().any(|s| s.included) {
        return Err(Error::NoTransitions);
    }
    Ok(())
}

pub(super) fn included_transitions(out: &Path) -> Result<Vec<TransitionSpec>> {
    let specs: Vec<TransitionSpec> = read_json(&out.join(TRANSITIONS_JSON))?;
    Ok(specs.into_iter().filter(|s| s.included).collect())
}

fn mlp(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let (t1, t2) = calibration_maps(cx)?;
    let stack = DriverStack::load(&cx.path("drivers"))?;
    let mut summary = String::from("from_class,to_class,epochs,accuracy,skill,train_rms,test_rms\n");
    for spec in included_transitions(cx.out)? {
        let set = build_training_set(&t1, &t2, &stack, &spec, c.mlp.samples_per_class, c.seed)?;
        let model = train_mlp(&set, &c.mlp)?;
        let dir = cx.path(&transition_dir("mlp", &spec));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        model.save(&cx.path(&model_path(&spec)))?;
        write_text(&dir.join("parameters.csv"), &parameters_csv(&model))?;
        write_text(&dir.join("class_skill.csv"), &class_skill_csv(&model, t1.legend()))?;
        let potential = transition_potential(&model, &t2, &stack)?;
        write_float_grid(&potential, &cx.path(&potential_path(&spec)), ASC)?;
        let rms = model.final_rms();
        writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            spec.from_class,
            spec.to_class,
            model.epochs(),
            model.performance.accuracy,
            model.performance.skill,
            rms.train,
            rms.test
        )
        .expect("string write");
    }
    write_text(&cx.path("mlp/summary.csv"), &summary)
}

fn influence(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let (t1, t2) = calibration_maps(cx)?;
    let stack = DriverStack::load(&cx.path("drivers"))?;
    for spec in included_transitions(cx.out)? {
        let set = build_training_set(&t1, &t2, &stack, &spec, c.mlp.samples_per_class, c.seed)?;
        let model = MlpModel::load(&cx.path(&model_path(&spec)))?;
        let inf = variable_influence(&model, &set);
        let dir = cx.path(&transition_dir("influence", &spec));
        write_text(&dir.join("forced_constant.csv"), &forced_constant_csv(&inf))?;
        write_text(&dir.join("all_but_one.csv"), &all_but_one_csv(&inf))?;
    }
    Ok(())
}

pub(super) const MARKOV_JSON: &str = "markov/markov.json";

fn markov(cx: &Ctx) -> Result<()> {
    let y = &cx.config.years;
    let (t1, t2) = calibration_maps(cx)?;
    let p = markov_from_crosstab(&t1, &t2, f64::from(y.t1), f64::from(y.t2))?;
    let mut csv = String::from("from_class");
    for id in &p.classes {
        write!(csv, ",{id}").expect("string write");
    }
    csv.push('\n');
    for (i, id) in p.classes.iter().enumerate() {
        write!(csv, "{id}").expect("string write");
        for j in 0..p.k() {
            write!(csv, ",{}", p.at(i, j)).expect("string write");
        }
        csv.push('\n');
    }
    write_text(&cx.path("markov/markov.csv"), &csv)?;
    write_json(&cx.path(MARKOV_JSON), &p)
}

#[derive(Serialize)]
struct ProjectionSummary {
    year: i32,
    steps: f64,
    slr_m: Option<f64>,
    converted: Vec<(TransitionSpec, u64)>,
    shortfalls: Vec<Shortfall>,
}

/// Years projected from t2: the validation year (if observed) and each target.
pub(super) fn projection_years(c: &PipelineConfig) -> Vec<(i32, Option<f64>)> {
    let mut v = Vec::new();
    if c.lulc.t3.is_some() {
        v.push((c.years.t3, None));
    }
    v.extend(c.projection_targets.iter().map(|t| (t.year, Some(t.slr_m))));
    v
}

fn projections(cx: &Ctx) -> Result<()> {
    let c = cx.config;
    let (_, t2) = calibration_maps(cx)?;
    let p: MarkovMatrix = read_json(&cx.path(MARKOV_JSON))?;
    let potentials = included_transitions(cx.out)?
        .into_iter()
        .map(|spec| Ok((spec, read_float_grid(&cx.path(&potential_path(&spec)), ASC)?)))
        .collect::<Result<Vec<_>>>()?;
    let counts = class_counts(&t2);
    let study = read_study_area(cx)?;
    let mut summary = Vec::new();
    for (year, slr) in projection_years(c) {
        let projection = project_markov(&p, &counts, f64::from(c.years.t2), f64::from(year))?;
        let allocation = allocate(&t2, &potentials, &projection)?;
        write_class(&cx.path(&projected_path(year)), &allocation.grid)?;
        let mut csv = String::from("from_class,to_class,quota,converted\n");
        for (spec, n) in &allocation.converted {
            let q = projection.quota(spec.from_class, spec.to_class);
            writeln!(csv, "{},{},{q},{n}", spec.from_class, spec.to_class).expect("string write");
        }
        write_text(&cx.path(&format!("projections/quotas_{year}.csv")), &csv)?;
        if let Some(h) = slr {
            let shares = lulc_under_slr(&allocation.grid, &study_mask(cx, h, &study)?)?;
            write_text(
                &cx.path(&format!("projections/lulc_under_slr_{year}.csv")),
                &shares_csv(&[(h, shares)]),
            )?;
        }
        summary.push(ProjectionSummary {
            year,
            steps: projection.steps,
            slr_m: slr,
            converted: allocation.converted,
            shortfalls: allocation.shortfalls,
        });
    }
    write_json(&cx.path("projections/projections.json"), &summary)
}

pub(super) const VALIDATION_MAP: &str = "validation/validation_map.asc";
pub(super) const VALIDATION_CSV: &str = "validation/validation_counts.csv";

fn validation(cx: &Ctx) -> Result<()> {
    let y = &cx.config.years;
    let t2 = read_class_grid(&cx.path(&lulc_path(y.t2)), ASC)?;
    let predicted = read_class_grid(&cx.path(&projected_path(y.t3)), ASC)?;
    let observed = read_class_grid(&cx.path(&lulc_path(y.t3)), ASC)?;
    let v = validate_three_map(&t2, &predicted, &observed)?;
    write_class(&cx.path(VALIDATION_MAP), &v.grid)?;
    let n = v.counts;
    let csv = format!(
        "category,cells\nhits,{}\nmisses,{}\nfalse_alarms,{}\ncorrect_rejections,{}\n",
        n.hits, n.misses, n.false_alarms, n.correct_rejections
    );
    write_text(&cx.path(VALIDATION_CSV), &csv)
}
