use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lfdiff::lf::LF4D_VERSION;
use lfdiff::pipeline::CHECKPOINT_VERSION;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub lfdiff: &'static str,
    pub lf4d_format: u16,
    pub checkpoint_format: u16,
}

/// Provenance record written next to every artifact a command produces.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    /// SHA-256 of the resolved configuration
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

pub struct RunRecorder {
    started_unix: u64,
    start: Instant,
}

impl RunRecorder {
    pub fn start() -> Self {
        RunRecorder {
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            start: Instant::now(),
        }
    }

    /// Writes the manifest to `path`.
    pub fn finish(self, path: &Path, config: &[u8], seed: u64, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>) -> lfdiff::Result<()> {
        let manifest = RunManifest {
            command: std::env::args().collect(),
            config_hash: sha256_hex(config),
            seed,
            inputs,
            outputs,
            versions: Versions {
                lfdiff: env!("CARGO_PKG_VERSION"),
                lf4d_format: LF4D_VERSION,
                checkpoint_format: CHECKPOINT_VERSION,
            },
            started_unix: self.started_unix,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `<file>.run.json` beside a file output.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    path.with_file_name(name)
}
