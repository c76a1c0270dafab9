//! Layered configuration: TOML file, then `--set` overrides, then the
//! dedicated flags.

use std::path::Path;

use brp_cfo::{ExperimentConfig, MleInput, MleOptions, PreambleMode, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub system: SystemConfig,
    pub experiment: ExperimentSection,
    pub design: DesignSection,
    pub bounds: BoundsSection,
    pub tables: TablesSection,
    pub gamma: GammaSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub preamble_mode: PreambleMode,
    pub snr_grid_db: Vec<f64>,
    /// Monte Carlo trials per SNR point, also used for the EMCB in `bounds`.
    pub trials: usize,
    pub master_seed: u64,
    pub output_dir: String,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub mle_input: MleInput,
    pub mle: MleOptions,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            preamble_mode: e.preamble_mode,
            snr_grid_db: e.snr_grid_db,
            trials: e.trials,
            master_seed: e.master_seed,
            output_dir: "results".into(),
            threads: e.threads,
            mle_input: e.mle_input,
            mle: e.mle,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaPolicy {
    /// Zero of the degradation function.
    #[default]
    Optimal,
    /// Closed-form approximation for even `M`.
    Heuristic,
    /// `theta2 = 0`: both sources send a periodic preamble.
    Periodic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub theta_policy: ThetaPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Draws used to estimate `Gamma = E[R^{-1}]`.
    pub gamma_samples: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { gamma_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablesSection {
    pub degradation_m: Vec<usize>,
    pub grid_points: usize,
    pub heuristic_m: Vec<usize>,
}

impl Default for TablesSection {
    fn default() -> Self {
        Self { degradation_m: vec![3, 4, 5, 6], grid_points: 1001, heuristic_m: vec![4, 6, 8, 10, 12] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSection {
    pub samples: usize,
}

impl Default for GammaSection {
    fn default() -> Self {
        Self { samples: 10_000 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub snr: Option<String>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.into(), source })?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in &overrides.set {
            apply_set(&mut table, item)?;
        }
        let mut config: CliConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            config.experiment.master_seed = seed;
        }
        if let Some(trials) = overrides.trials {
            config.experiment.trials = trials;
        }
        if let Some(snr) = &overrides.snr {
            config.experiment.snr_grid_db = parse_snr_grid(snr)?;
        }
        Ok(config)
    }

    pub fn experiment_config(&self, output_dir: &Path) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            system: self.system.clone(),
            preamble_mode: e.preamble_mode,
            snr_grid_db: e.snr_grid_db.clone(),
            trials: e.trials,
            master_seed: e.master_seed,
            outputs: output_dir.display().to_string(),
            threads: e.threads,
            mle_input: e.mle_input,
            mle: e.mle,
        }
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Apply one `section.key=value` assignment. The value is read as a TOML
/// literal, falling back to a bare string.
fn apply_set(table: &mut toml::Table, item: &str) -> CliResult<()> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{item}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key '{key}'")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

    let (last, parents) = path.split_last().expect("nonempty path");
    let mut node = table;
    for part in parents {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("'{part}' in '{key}' is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// `start:step:stop` (inclusive) or a comma-separated list, in dB.
pub fn parse_snr_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Usage(format!("invalid SNR grid '{text}': {why}"));
    let number = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let grid = if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(number).collect::<Option<_>>().ok_or_else(|| bad("not a number"))?;
        let [start, step, stop] = parts[..] else {
            return Err(bad("expected start:step:stop"));
        };
        if step <= 0.0 || stop < start {
            return Err(bad("step must be positive and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(bad("too many points"));
        }
        (0..count).map(|i| start + step * i as f64).collect()
    } else {
        text.split(',').map(number).collect::<Option<Vec<_>>>().ok_or_else(|| bad("not a number"))?
    };
    if grid.is_empty() {
        return Err(bad("empty"));
    }
    Ok(grid)
}
