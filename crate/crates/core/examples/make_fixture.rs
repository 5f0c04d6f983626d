//! Regenerates the bundled digit fixture:
//!
//! ```text
//! cargo run -p rfsgd --example make_fixture -- crates/core/tests/fixtures
//! ```

use std::path::PathBuf;

use rfsgd::data::write_digit_fixture;

const FIXTURE_SEED: u64 = 37;
const PER_DIGIT: usize = 500;

fn main() -> rfsgd::Result<()> {
    let dir: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/fixtures"));
    std::fs::create_dir_all(&dir).map_err(|e| rfsgd::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let (images, labels) = write_digit_fixture(&dir, FIXTURE_SEED, PER_DIGIT, &[3, 7])?;
    println!("{}\n{}", images.display(), labels.display());
    Ok(())
}
