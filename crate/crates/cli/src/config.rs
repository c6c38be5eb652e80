//! Layered run configuration: built-in defaults, then a TOML file, then
//! `--set section.key=value` overrides.

use std::fs;
use std::path::Path;

use lawnsim_core::region::EvalGrid;
use lawnsim_core::waveform::PilotPattern;
use lawnsim_core::Scenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::CliError;

/// Settings of the figure sweeps that are not part of the physical scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Altitude of the single-plane experiments (maps, thresholds, pilots).
    pub plane_altitude: f64,
    pub gamma_db: Vec<f64>,
    pub d_th: Vec<f64>,
    pub pilot_ratios: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            plane_altitude: 200.0,
            gamma_db: vec![0.0, 0.5, 1.0, 2.0],
            d_th: vec![0.0, 25.0, 50.0, 100.0],
            pilot_ratios: vec![0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2],
            snr_db: (0..9).map(|i| -30.0 + 5.0 * f64::from(i)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub trials: u64,
    /// Added to every analytic probability; non-zero only for fault injection.
    pub perturbation: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { trials: 100_000, perturbation: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub trials: usize,
    pub distances: Vec<f64>,
    pub gamma_db: Vec<f64>,
    pub pattern: PilotPattern,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            trials: 2000,
            distances: vec![100.0, 250.0, 500.0],
            gamma_db: vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0],
            pattern: PilotPattern::Contiguous,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    pub grid: EvalGrid,
    pub sweep: SweepConfig,
    pub montecarlo: MonteCarloConfig,
    pub oracle: OracleConfig,
}

/// Keys accepted by `--set` that have no default value to serialize.
const OPTIONAL_KEYS: [&str; 1] = ["scenario.gamma_override"];

impl Config {
    /// Resolve defaults, an optional file, and `key=value` overrides in that order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        cfg.scenario.validate().map_err(|v| CliError::Config(format!("invalid scenario: {v}")))?;
        cfg.grid.check().map_err(|e| CliError::Config(format!("invalid grid: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// First 16 hex digits of the SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn known_key(section: &str, key: &str) -> bool {
    let defaults = Value::try_from(Config::default()).expect("defaults serialize");
    let in_defaults = defaults.get(section).and_then(Value::as_table).is_some_and(|t| t.contains_key(key));
    in_defaults || OPTIONAL_KEYS.contains(&format!("{section}.{key}").as_str())
}

/// Parse the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, ov: &str) -> Result<(), CliError> {
    let (key, raw) =
        ov.split_once('=').ok_or_else(|| CliError::Config(format!("override `{ov}` is not of the form key=value")))?;
    let key = key.trim();
    let (section, field) =
        key.split_once('.').ok_or_else(|| CliError::Config(format!("override key `{key}` must be section.field")))?;
    if !known_key(section, field) {
        return Err(CliError::Config(format!("unknown configuration key `{key}`")));
    }
    let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    let Value::Table(sec) = entry else {
        return Err(CliError::Config(format!("`{section}` is not a section")));
    };
    sec.insert(field.to_string(), parse_value(raw.trim()));
    Ok(())
}
