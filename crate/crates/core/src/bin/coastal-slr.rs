use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use coastal_slr::geoservice::{serve, ServiceState};
use coastal_slr::landchange::skill;
use coastal_slr::pipeline::{Pipeline, PipelineConfig, Stage, CATALOG_FILE};
use coastal_slr::raster::Connectivity;
use coastal_slr::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "coastal-slr", version, about = "Sea-level-rise inundation and land-change study runner")]
struct Cli {
    /// Study configuration (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Overrides both the sampling seed and the network seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clip the DEM and vectors to the study area.
    Ingest,
    /// Build the inundation masks.
    Inundate {
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        /// 4 or 8.
        #[arg(long)]
        connectivity: Option<u8>,
    },
    /// Area and percentage of the study area per height.
    Stats,
    /// Maximum-likelihood classification of the image bands.
    Classify {
        /// Class priors as `id=p`, comma separated.
        #[arg(long, value_delimiter = ',')]
        priors: Option<Vec<String>>,
    },
    /// Accuracy assessment of the classified map.
    Assess,
    /// Driver variable stack.
    Drivers,
    /// Change analysis and one network per included transition.
    LcmTrain {
        /// Minimum cells for a transition to be modelled.
        #[arg(long)]
        threshold: Option<u64>,
    },
    /// Driver influence tests on the trained networks.
    LcmInfluence,
    /// Markov quotas and projected land cover.
    LcmProject,
    /// Hits, misses and false alarms against the validation year.
    LcmValidate,
    /// Write and verify the catalog.
    Export,
    /// Everything.
    Run,
    /// Publish a catalog over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Defaults to the catalog under the configured output directory.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Chance-corrected skill of an accuracy.
    Skill {
        #[arg(long)]
        accuracy: f64,
        #[arg(long)]
        classes: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        c.seed = seed;
        c.mlp.seed = seed;
    }
    Ok(c)
}

fn parse_priors(items: &[String]) -> Result<BTreeMap<u8, f64>> {
    items
        .iter()
        .map(|item| {
            let bad = || Error::config("classification.priors", format!("`{item}` is not id=p"));
            let (id, p) = item.split_once('=').ok_or_else(bad)?;
            Ok((id.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn print_file(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    print!("{text}");
    Ok(())
}

fn run_stage(mut config: PipelineConfig, command: &Command) -> Result<()> {
    let stage = match command {
        Command::Ingest => Stage::Ingest,
        Command::Inundate { heights, connectivity } => {
            if let Some(h) = heights {
                config.heights = h.clone();
            }
            match connectivity {
                Some(4) => config.connectivity = Connectivity::Four,
                Some(8) => config.connectivity = Connectivity::Eight,
                Some(n) => return Err(Error::config("connectivity", format!("{n} is not 4 or 8"))),
                None => {}
            }
            Stage::Scenarios
        }
        Command::Stats => Stage::Stats,
        Command::Classify { priors } => {
            if let Some(p) = priors {
                let k = config
                    .classification
                    .as_mut()
                    .ok_or_else(|| Error::config("classification", "required by the `classify` stage"))?;
                k.priors = Some(parse_priors(p)?);
            }
            Stage::Classify
        }
        Command::Assess => Stage::Assess,
        Command::Drivers => Stage::Drivers,
        Command::LcmTrain { threshold } => {
            if let Some(t) = threshold {
                config.transition_threshold = *t;
            }
            Stage::Mlp
        }
        Command::LcmInfluence => Stage::Influence,
        Command::LcmProject => Stage::Projections,
        Command::LcmValidate => Stage::Validation,
        Command::Export | Command::Run => Stage::Catalog,
        Command::Serve { .. } | Command::Skill { .. } => unreachable!("not a pipeline stage"),
    };
    config.validate()?;
    let mut p = Pipeline::new(config)?;
    p.run(stage)?;
    let report = p.report();
    let names = |v: &[Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
    eprintln!("executed: {}", names(&report.executed));
    eprintln!("up to date: {}", names(&report.skipped));
    let out = p.output_dir();
    match stage {
        Stage::Stats => print_file(&out.join("stats/scenario_stats.csv"))?,
        Stage::Assess => print_file(&out.join("assess/accuracy.txt"))?,
        Stage::Validation => print_file(&out.join("validation/validation_counts.csv"))?,
        Stage::Catalog => {
            let path = out.join(CATALOG_FILE);
            coastal_slr::pipeline::verify_catalog(&path)?;
            println!("{}", path.display());
        }
        _ => {
            if let Some(record) = p.record(stage) {
                for rel in record.outputs.keys() {
                    println!("{}", out.join(rel).display());
                }
            }
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Skill { accuracy, classes } => {
            if *classes < 2 {
                return Err(Error::InvalidArgument("--classes must be at least 2".into()));
            }
            println!("{:.4}", skill(*accuracy, *classes));
            Ok(())
        }
        Command::Serve { port, bind, catalog } => {
            let path = match catalog {
                Some(p) => p.clone(),
                None => load_config(&cli)?.output_dir.join(CATALOG_FILE),
            };
            let state = Arc::new(ServiceState::load(&path)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve(state, SocketAddr::new(*bind, *port)))
        }
        command => run_stage(load_config(&cli)?, command),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
