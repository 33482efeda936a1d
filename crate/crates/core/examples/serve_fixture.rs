//! Run the bundled fjord study into a temporary directory and publish it over
//! HTTP until interrupted.
//!
//! ```text
//! cargo run --release --example serve_fixture -- 8080
//! curl 'http://127.0.0.1:8080/api/query?x=...&y=...&h=2'
//! ```

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use coastal_slr::geoservice::{serve, ServiceState};
use coastal_slr::pipeline::{run_pipeline, PipelineConfig};

fn main() -> coastal_slr::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let port: u16 = std::env::args().nth(1).and_then(|p| p.parse().ok()).unwrap_or(8080);
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fjord/config.json");
    let out = std::env::temp_dir().join("coastal-slr-fjord");
    let mut config = PipelineConfig::load(&fixture)?;
    config.output_dir = out;
    let catalog = run_pipeline(&config)?.catalog.expect("catalog stage ran");
    let state = Arc::new(ServiceState::load(&catalog)?);
    let e = &state.catalog().bounds.projected;
    println!("extent {:.0},{:.0} .. {:.0},{:.0}; see /api/docs", e.min_x, e.min_y, e.max_x, e.max_y);
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    rt.block_on(serve(state, SocketAddr::from(([127, 0, 0, 1], port))))
}
