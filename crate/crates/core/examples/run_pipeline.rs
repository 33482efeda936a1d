//! Run the full study from a JSON configuration and print what ran.
//!
//! ```text
//! cargo run --release --example run_pipeline -- fixtures/fjord/config.json
//! ```

use std::path::PathBuf;

use coastal_slr::pipeline::{run_pipeline, PipelineConfig};

fn main() -> coastal_slr::Result<()> {
    env_logger::init();
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/fjord/config.json".into()));
    let config = PipelineConfig::load(&path)?;
    let report = run_pipeline(&config)?;
    let names = |v: &[coastal_slr::pipeline::Stage]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
    println!("executed: {}", names(&report.executed));
    println!("up to date: {}", names(&report.skipped));
    if let Some(catalog) = report.catalog {
        println!("catalog: {}", catalog.display());
    }
    Ok(())
}
