//! Scenario runner behind the `twinfocus` binary.

pub mod config;
pub mod report;
pub mod scenario;

pub use config::{apply_override, load_config, parse_config, Scenario, ScenarioConfig, SCENARIOS};
pub use report::{load_manifest, report, MetricSummary, Report};
pub use scenario::{run_scenario, FileEntry, Manifest, MANIFEST_NAME};

/// The `--list-scenarios` table.
pub fn scenario_table() -> String {
    let width = SCENARIOS.iter().map(|s| s.1.len()).max().unwrap_or(0);
    SCENARIOS.iter().map(|(_, name, about)| format!("{name:<width$}  {about}\n")).collect()
}
