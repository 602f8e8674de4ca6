//! Experiment scenarios: configuration parsing, scenario assembly,
//! synthetic-truth generation, and the CSV formats emitted by the CLI.

pub mod build;
pub mod config;
pub mod report;
pub mod truth;

pub use build::{build_scenario, load_scenario, Scenario};
pub use config::{config_digest, parse_config, serialize_config, ScenarioConfig};
pub use truth::{make_truth, TruthRecord};
