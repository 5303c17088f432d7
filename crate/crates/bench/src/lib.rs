//! Shared setup for the benchmarks.

use std::path::{Path, PathBuf};

use greenhouse_core::external_data::{DataSource, FixtureStore};
use greenhouse_core::{PreparedScenario, ScenarioConfig};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// A committed scenario prepared offline from the fixtures.
pub fn prepared(name: &str) -> PreparedScenario {
    let dir = repo_root().join("scenarios");
    let cfg = ScenarioConfig::load(&dir.join(name)).expect("scenario loads");
    let source = DataSource::offline(FixtureStore::new(repo_root().join("fixtures")));
    cfg.prepare(&dir, &source).expect("scenario prepares")
}
