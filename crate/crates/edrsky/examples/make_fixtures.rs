//! Regenerates the bundled synthetic fixtures in `fixtures/`.
//!
//! `cargo run --example make_fixtures`

use edrsky::hdr_io::write_auto;
use edrsky::synthetic::{gradient_sky, random_sky, sunny_sky};

fn main() -> Result<(), edrsky::error::Error> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).map_err(|e| edrsky::error::Error::io(&dir, e))?;

    // Sunny sky: 3.6% of on-disc pixels at 2^13.4, sun in the south-east.
    write_auto(&sunny_sky(256, 0.036, 13.4, 135.0, 45.0)?, dir.join("sunny_256.hdr"))?;
    write_auto(&gradient_sky(128)?, dir.join("gradient_128.hdr"))?;
    write_auto(&random_sky(128, 11)?, dir.join("random_128.hdr"))?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
