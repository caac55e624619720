//! Scenario files.
//!
//! A scenario file is TOML with four parts: the `preferences` list of
//! `(delta, epsilon)` pairs, a `[market]` table holding the model parameters,
//! optional `[[scenarios]]` drift overrides (`id` and factor loadings `a`),
//! `[simulation]` settings and an `[output]` table. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use carbon_ppi::model::MarketParams;
use carbon_ppi::simulator::SimConfig;
use carbon_ppi::{InfoMode, MarketModel, Preference};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The bundled benchmark configuration.
pub const TABLE1: &str = include_str!("../../../configs/table1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSpec {
    pub delta: f64,
    pub epsilon: f64,
}

impl PreferenceSpec {
    pub fn preference(&self) -> Result<Preference, CliError> {
        Ok(Preference::from_delta(self.delta, self.epsilon)?)
    }

    /// Short tag used in file names, e.g. `d0.7_e1`.
    pub fn tag(&self) -> String {
        format!("d{}_e{}", self.delta, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDrift {
    pub id: usize,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub modes: Vec<InfoMode>,
    pub v0: f64,
    pub protection_level: f64,
    /// Steps of the backward ODE grid.
    pub ode_steps: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            dt: 0.004,
            n_paths: 100_000,
            seed: 0,
            modes: vec![InfoMode::Partial],
            v0: 1.0,
            protection_level: 1.0,
            ode_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub dir: PathBuf,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub preferences: Vec<PreferenceSpec>,
    pub market: MarketParams,
    #[serde(default)]
    pub scenarios: Vec<ScenarioDrift>,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ScenarioConfig {
    pub fn market(&self) -> Result<MarketModel, CliError> {
        Ok(MarketModel::new(self.market.clone())?)
    }

    /// Market with the loadings of scenario `id`.
    pub fn scenario_market(&self, id: usize) -> Result<MarketModel, CliError> {
        let s = self
            .scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CliError::Validation(format!("scenario {id} is not defined")))?;
        let mut p = self.market.clone();
        p.a = s.a.clone();
        Ok(MarketModel::new(p)?)
    }

    pub fn sim_config(&self, mode: InfoMode) -> SimConfig {
        let s = &self.simulation;
        let mut c = SimConfig::new(s.horizon, s.dt, s.n_paths, s.seed, mode);
        c.v0 = s.v0;
        c.protection_level = s.protection_level;
        c
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: carbon_ppi::Error| CliError::Validation(e.to_string());
        let market = MarketModel::new(self.market.clone()).map_err(invalid)?;
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            if !ids.insert(s.id) {
                return Err(CliError::Validation(format!("scenario {} defined twice", s.id)));
            }
            self.scenario_market(s.id).map_err(|e| match e {
                CliError::Model(e) => CliError::Validation(format!("scenario {}: {e}", s.id)),
                other => other,
            })?;
        }
        for p in &self.preferences {
            Preference::from_delta(p.delta, p.epsilon).map_err(invalid)?;
        }
        let s = &self.simulation;
        if s.modes.is_empty() {
            return Err(CliError::Validation("simulation.modes is empty".into()));
        }
        if s.ode_steps < carbon_ppi::riccati::MIN_STEPS {
            return Err(CliError::Validation(format!(
                "simulation.ode_steps must be at least {}",
                carbon_ppi::riccati::MIN_STEPS
            )));
        }
        self.sim_config(InfoMode::Full).validate(market.r()).map_err(invalid)?;
        Ok(())
    }
}

/// Parses and validates a scenario file's text. `origin` names the source
/// in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

pub fn config_to_string(cfg: &ScenarioConfig) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::Validation(format!("cannot serialise configuration: {e}")))
}

pub fn write_config(cfg: &ScenarioConfig, path: &Path) -> Result<(), CliError> {
    let text = config_to_string(cfg)?;
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn table1() -> ScenarioConfig {
    parse_config(TABLE1, "table1.toml").expect("bundled configuration is valid")
}
