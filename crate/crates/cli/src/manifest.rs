use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use swflow::flow::FlowConfig;

use crate::failure::{CliResult, Failure};
use crate::setup::Source;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub iteration: usize,
    pub path: String,
}

/// Output file names, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub snapshots: Vec<SnapshotFile>,
    pub final_particles: String,
    pub privacy_report: String,
}

impl Outputs {
    pub fn for_config(cfg: &FlowConfig) -> Self {
        Outputs {
            snapshots: cfg
                .snapshot_iterations()
                .into_iter()
                .map(|iteration| SnapshotFile { iteration, path: format!("snapshot_{iteration:06}.csv") })
                .collect(),
            final_particles: "final.csv".into(),
            privacy_report: "privacy_report.json".into(),
        }
    }
}

/// Everything needed to replay a run: the resolved configuration (sigma
/// already calibrated), the data source and its fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: FlowConfig,
    pub requested_epsilon: Option<f64>,
    pub source: Source,
    pub data_fingerprint: String,
    pub rows: usize,
    pub dim: usize,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: Status,
    pub error: Option<String>,
    pub outputs: Outputs,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
            .map_err(|e| Failure::runtime(format!("cannot write manifest in {}: {e}", dir.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("bad manifest {}: {e}", path.display())))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
