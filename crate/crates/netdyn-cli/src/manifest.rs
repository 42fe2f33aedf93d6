//! Run manifest: the resolved config, seeds, versions, and output list that
//! make a run replayable. Wall-clock timings are recorded for diagnostics
//! and are the only run-dependent fields.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::CliResult;
use crate::output;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub rng_algorithm: &'static str,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub seeds: serde_json::Value,
    /// Fully materialized configuration (every default filled in).
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    /// Per-stage wall-clock seconds; run-dependent by nature.
    pub timings: BTreeMap<String, f64>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    stage_start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("netdyn", netdyn_version());
        versions.insert("netdyn-cli", env!("CARGO_PKG_VERSION"));
        let now = Instant::now();
        Self {
            manifest: RunManifest {
                command,
                rng_algorithm: netdyn::rng::RNG_ALGORITHM,
                versions,
                seeds: serde_json::Value::Null,
                config,
                outputs: Vec::new(),
                warnings: Vec::new(),
                timings: BTreeMap::new(),
            },
            started: now,
            stage_start: now,
        }
    }

    pub fn seeds_value(&mut self, seeds: serde_json::Value) {
        self.manifest.seeds = seeds;
    }

    pub fn warn_all(&mut self, warnings: &[String]) {
        self.manifest.warnings.extend_from_slice(warnings);
    }

    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        let secs = now.duration_since(self.stage_start).as_secs_f64();
        self.manifest.timings.insert(name.to_string(), secs);
        self.stage_start = now;
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    /// Writes `manifest.json` into the output directory.
    pub fn write(mut self, dir: &Path) -> CliResult<()> {
        let total = self.started.elapsed().as_secs_f64();
        self.manifest.timings.insert("total".to_string(), total);
        let path = dir.join("manifest.json");
        self.manifest.outputs.push(path.display().to_string());
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        output::write_atomic(&path, &text)
    }
}

fn netdyn_version() -> &'static str {
    // The library crate version travels with this binary's lockfile.
    env!("CARGO_PKG_VERSION")
}
