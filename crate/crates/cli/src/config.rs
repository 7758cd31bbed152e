use std::path::Path;

use sc_resilience::experiments::ExperimentConfig;
use sc_resilience::ScenarioSpec;
use serde_json::Value;

use crate::Failure;

/// Keys that mark a document as an experiment config rather than a bare scenario.
const EXPERIMENT_KEYS: &[&str] =
    &["scenario", "modes", "repetitions", "mc_samples", "panel", "holdout", "w1_grid", "sweeps", "dataset_sims"];

/// Reads `path` as an experiment config, or as a scenario spec wrapped in the
/// default experiment settings. No path means the built-in defaults.
pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::User(format!("cannot read config {}: {e}", path.display())))?;
    let in_file = |e: sc_resilience::Error| match Failure::from(e) {
        Failure::User(m) => Failure::User(format!("{}: {m}", path.display())),
        Failure::Runtime(m) => Failure::Runtime(format!("{}: {m}", path.display())),
    };
    let is_experiment = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => map.keys().any(|k| EXPERIMENT_KEYS.contains(&k.as_str())),
        // Let the strict parser report syntax problems with positions.
        Ok(_) | Err(_) => !text.trim().is_empty(),
    };
    if is_experiment {
        return ExperimentConfig::from_json_str(&text).map_err(in_file);
    }
    let scenario = ScenarioSpec::from_json_str(&text).map_err(in_file)?;
    Ok(ExperimentConfig { mc_samples: scenario.mc_repetitions, seed: scenario.seed, scenario, ..Default::default() })
}
