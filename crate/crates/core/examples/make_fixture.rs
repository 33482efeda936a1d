//! Regenerate the synthetic fjord fixture.
//!
//! ```text
//! cargo run --example make_fixture -- [output_dir] [seed]
//! ```

use std::path::PathBuf;

use coastal_slr::fixture::FjordFixture;

fn main() -> coastal_slr::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/fjord".into()));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    let fixture = FjordFixture::generate(seed)?;
    let config = fixture.write(&dir)?;
    println!("wrote {}", config.display());
    Ok(())
}
