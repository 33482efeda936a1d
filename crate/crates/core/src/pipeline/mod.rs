//! Declarative end-to-end runner.
//!
//! Stages run in a fixed order and write into `<output_dir>/<stage>/`. Each
//! stage is cached by the content of what it reads (see [`cache`]), so a
//! repeated run with unchanged inputs executes nothing, and a damaged output
//! makes only its own stage run again.

pub mod cache;
pub mod catalog;
mod config;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use cache::{Cache, StageKey, StageRecord};

pub use catalog::{load_catalog, verify_catalog, ScenarioCatalog, CATALOG_FILE};
pub use config::{
    ClassificationConfig, DriverPaths, LulcPaths, PipelineConfig, ProjectionTarget, Style, Years,
    OUTPUT_DIR_ENV,
};
pub use stages::{height_label, mask_path, polygons_path};

/// Written to the output directory on every run.
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";
/// Timestamps live here and nowhere else.
pub const RUN_LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Scenarios,
    Stats,
    Classify,
    Assess,
    Lulc,
    Drivers,
    Change,
    Mlp,
    Influence,
    Markov,
    Projections,
    Validation,
    Catalog,
}

impl Stage {
    pub const ALL: [Stage; 14] = [
        Stage::Ingest,
        Stage::Scenarios,
        Stage::Stats,
        Stage::Classify,
        Stage::Assess,
        Stage::Lulc,
        Stage::Drivers,
        Stage::Change,
        Stage::Mlp,
        Stage::Influence,
        Stage::Markov,
        Stage::Projections,
        Stage::Validation,
        Stage::Catalog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Scenarios => "scenarios",
            Stage::Stats => "stats",
            Stage::Classify => "classify",
            Stage::Assess => "assess",
            Stage::Lulc => "lulc",
            Stage::Drivers => "drivers",
            Stage::Change => "change",
            Stage::Mlp => "mlp",
            Stage::Influence => "influence",
            Stage::Markov => "markov",
            Stage::Projections => "projections",
            Stage::Validation => "validation",
            Stage::Catalog => "catalog",
        }
    }

    /// Whether the configuration provides what this stage needs.
    pub fn enabled(self, c: &PipelineConfig) -> bool {
        match self {
            Stage::Classify => c.classification.is_some(),
            Stage::Assess => c.classification.as_ref().is_some_and(|k| k.reference.is_some()),
            Stage::Validation => c.lulc.t3.is_some(),
            _ => true,
        }
    }

    fn deps(self, c: &PipelineConfig) -> Vec<Stage> {
        use Stage::*;
        let mut d = match self {
            Ingest | Classify => vec![],
            Scenarios | Drivers => vec![Ingest],
            Stats => vec![Ingest, Scenarios],
            Assess => vec![Classify],
            Lulc => vec![Ingest, Scenarios],
            Change | Markov => vec![Lulc],
            Mlp => vec![Lulc, Drivers, Change],
            Influence => vec![Lulc, Drivers, Change, Mlp],
            Projections => vec![Ingest, Scenarios, Lulc, Change, Mlp, Markov],
            Validation => vec![Lulc, Projections],
            Catalog => Stage::ALL[..13].to_vec(),
        };
        if self == Lulc && Classify.enabled(c) {
            d.push(Classify);
        }
        d.retain(|s| s.enabled(c));
        d
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
    /// Set once the catalog stage has run or been verified.
    pub catalog: Option<PathBuf>,
}

pub struct Pipeline {
    config: PipelineConfig,
    cache: Cache,
    records: BTreeMap<Stage, StageRecord>,
    report: RunReport,
}

impl Pipeline {
    /// Prepare the output directory and echo the effective configuration.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let out = &config.output_dir;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let echo = out.join(EFFECTIVE_CONFIG_FILE);
        let text = serde_json::to_string_pretty(&config).expect("config serializes") + "\n";
        fs::write(&echo, text).map_err(|e| Error::io(&echo, e))?;
        Ok(Pipeline {
            cache: Cache::new(out),
            config,
            records: BTreeMap::new(),
            report: RunReport::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn into_report(self) -> RunReport {
        self.report
    }

    /// Run `target` and everything it depends on.
    pub fn run(&mut self, target: Stage) -> Result<()> {
        if !target.enabled(&self.config) {
            let key = match target {
                Stage::Validation => "lulc.t3",
                Stage::Assess => "classification.reference",
                _ => "classification",
            };
            return Err(Error::config(key, format!("required by the `{}` stage", target.name())));
        }
        let mut needed = BTreeSet::new();
        let mut stack = vec![target];
        while let Some(s) = stack.pop() {
            if needed.insert(s) {
                stack.extend(s.deps(&self.config));
            }
        }
        for stage in Stage::ALL.into_iter().filter(|s| needed.contains(s)) {
            if !self.records.contains_key(&stage) {
                self.run_stage(stage).map_err(|e| match e {
                    e @ Error::Config { .. } => e,
                    e => Error::Stage { stage: stage.name().into(), source: Box::new(e) },
                })?;
            }
        }
        Ok(())
    }

    pub fn run_all(&mut self) -> Result<()> {
        self.run(Stage::Catalog)
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.records.get(&stage)
    }

    fn stage_key(&self, stage: Stage) -> Result<String> {
        let params = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "params": stages::params(stage, &self.config),
        });
        let mut key = StageKey::new(stage.name(), &params);
        for dep in stage.deps(&self.config) {
            key.upstream(&self.records[&dep]);
        }
        for (label, path) in stages::inputs(stage, &self.config) {
            key.file(&label, &path)?;
            for sidecar in [crate::raster::prj_sidecar_path(&path), crate::raster::legend_sidecar_path(&path)] {
                if sidecar != path && sidecar.is_file() {
                    key.file(&format!("{label}#{}", sidecar.extension().unwrap_or_default().to_string_lossy()), &sidecar)?;
                }
            }
        }
        Ok(key.digest())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let out = self.config.output_dir.clone();
        let key = self.stage_key(stage)?;
        let started = Instant::now();
        if let Some(record) = self.cache.valid(stage.name(), &key) {
            log::info!("{}: up to date", stage.name());
            self.log_line(stage, "skipped", started)?;
            self.records.insert(stage, record);
            self.report.skipped.push(stage);
            if stage == Stage::Catalog {
                self.report.catalog = Some(out.join(CATALOG_FILE));
            }
            return Ok(());
        }
        log::info!("{}: running", stage.name());
        self.cache.invalidate(stage.name());
        if let Some(old) = self.cache.load(stage.name()) {
            for rel in old.outputs.keys() {
                let _ = fs::remove_file(out.join(rel));
            }
        }
        let dir = out.join(stage.name());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ctx = stages::Ctx {
            config: &self.config,
            out: &out,
            records: &self.records,
        };
        stages::run(stage, &ctx)?;
        let mut outputs = Vec::new();
        list_files(&out, &dir, &mut outputs)?;
        if stage == Stage::Catalog {
            outputs.push(CATALOG_FILE.to_string());
            self.report.catalog = Some(out.join(CATALOG_FILE));
        }
        outputs.sort();
        let record = self.cache.store(stage.name(), key, &outputs)?;
        self.records.insert(stage, record);
        self.report.executed.push(stage);
        self.log_line(stage, "executed", started)
    }

    fn log_line(&self, stage: Stage, what: &str, started: Instant) -> Result<()> {
        let path = self.config.output_dir.join(RUN_LOG_FILE);
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(
            f,
            "{}.{:03} {} {what} {:.3}s",
            now.as_secs(),
            now.subsec_millis(),
            stage.name(),
            started.elapsed().as_secs_f64()
        )
        .map_err(|e| Error::io(&path, e))
    }
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

/// Run every stage and return what executed and where the catalog is.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let mut p = Pipeline::new(config.clone())?;
    p.run_all()?;
    Ok(p.into_report())
}
