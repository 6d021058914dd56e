//! Shared fixtures for the benchmarks in `benches/`.

use std::path::Path;

use xdeal_core::Scenario;

/// Loads a bundled scenario by file stem.
pub fn scenario(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}
