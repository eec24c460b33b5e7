//! Scenario configuration, read from TOML.
//!
//! Every key has a default, so an empty file describes the reference
//! scenario: five workflows, one contractor, one architect and one tax
//! auditor, values drawn from [1,000,000; 10,000,000].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fraud::{FraudParams, ScoringMode};
use crate::state::Params;
use crate::types::Rate;
use crate::workflow::DurationProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub max_ticks: u64,
    pub agents: AgentCounts,
    pub thresholds: Thresholds,
    pub economics: Economics,
    pub workflow: WorkflowConfig,
    pub fraud: FraudConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentCounts {
    pub workflows: u32,
    pub general_contractors: u32,
    pub engineers: u32,
    pub accountants: u32,
    pub clients: u32,
    pub suppliers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Chance per tick that a contractor pays a pending anticipation.
    pub general_contractor: f64,
    /// Chance per tick that a technician signs a pending asseveration.
    pub technical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Economics {
    pub discount_rate: f64,
    pub accrual_factor: f64,
    /// Credit sale price as a multiple of the spend it covers.
    pub sale_factor: f64,
    pub investor_deposits: Vec<u64>,
    /// Cycled over the contractors.
    pub soa_caps: Vec<u64>,
    pub architect_share: f64,
    pub auditor_share: f64,
    pub supplier_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    pub wps_fractions: Vec<f64>,
    pub anticipation_fraction: f64,
    pub value_range: [u64; 2],
    pub duration_profile: DurationProfile,
    pub ticks_per_month: u64,
    /// Defaults to a tenth of the profile duration.
    pub c1_grace_ticks: Option<u64>,
    pub c2_period_ticks: u64,
    pub max_active_per_client: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudConfig {
    pub suspicion_rate: f64,
    pub weights: [f64; 3],
    pub limit: f64,
    pub penalty: u64,
    pub scoring: ScoringMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            max_ticks: 365,
            agents: AgentCounts::default(),
            thresholds: Thresholds::default(),
            economics: Economics::default(),
            workflow: WorkflowConfig::default(),
            fraud: FraudConfig::default(),
        }
    }
}

impl Default for AgentCounts {
    fn default() -> Self {
        Self {
            workflows: 5,
            general_contractors: 1,
            engineers: 1,
            accountants: 1,
            clients: 3,
            suppliers: 1,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            general_contractor: 0.5,
            technical: 0.5,
        }
    }
}

impl Default for Economics {
    fn default() -> Self {
        Self {
            discount_rate: 0.90,
            accrual_factor: 1.10,
            sale_factor: 1.05,
            investor_deposits: vec![25_000_000, 20_000_000, 15_000_000],
            soa_caps: vec![50_000_000],
            architect_share: 0.20,
            auditor_share: 0.10,
            supplier_share: 0.30,
        }
    }
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self {
            wps_fractions: vec![0.30, 0.60, 1.00],
            anticipation_fraction: 0.10,
            value_range: [1_000_000, 10_000_000],
            duration_profile: DurationProfile::Combined,
            ticks_per_month: 30,
            c1_grace_ticks: None,
            c2_period_ticks: 30,
            max_active_per_client: 2,
        }
    }
}

impl Default for FraudConfig {
    fn default() -> Self {
        Self {
            suspicion_rate: 0.5,
            weights: [1.0, 1.0, 1.0],
            limit: 2.0,
            penalty: 1_000,
            scoring: ScoringMode::Normalized,
        }
    }
}

fn rate(name: &str, value: f64) -> Result<Rate> {
    Rate::from_f64(value).ok_or_else(|| Error::Config(format!("{name} must be a finite non-negative number")))
}

fn ratio(name: &str, value: f64) -> Result<Rate> {
    let r = rate(name, value)?;
    if !r.is_unit_interval() {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {value}")));
    }
    Ok(r)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(LoadError::Invalid)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?.validate()?;
        ratio("thresholds.general_contractor", self.thresholds.general_contractor)?;
        ratio("thresholds.technical", self.thresholds.technical)?;
        ratio("economics.discount_rate", self.economics.discount_rate)?;
        if rate("economics.sale_factor", self.economics.sale_factor)? == Rate::ZERO {
            return Err(Error::Config("economics.sale_factor must be positive".into()));
        }
        let [lo, hi] = self.workflow.value_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("workflow.value_range [{lo}, {hi}] must satisfy 0 < min <= max")));
        }
        let a = &self.agents;
        if a.workflows > 0 {
            let missing = [
                ("general_contractors", a.general_contractors),
                ("engineers", a.engineers),
                ("accountants", a.accountants),
                ("clients", a.clients),
            ];
            if let Some((name, _)) = missing.iter().find(|(_, n)| *n == 0) {
                return Err(Error::Config(format!("agents.{name} must be at least 1 when workflows are configured")));
            }
            if self.economics.investor_deposits.iter().sum::<u64>() == 0 {
                return Err(Error::Config("economics.investor_deposits must fund the pool".into()));
            }
            if self.economics.soa_caps.is_empty() {
                return Err(Error::Config("economics.soa_caps must list at least one cap".into()));
            }
        }
        Ok(())
    }

    /// The engine parameters this scenario runs with.
    pub fn params(&self) -> Result<Params> {
        let e = &self.economics;
        let w = &self.workflow;
        let f = &self.fraud;
        let accrual_factor = rate("economics.accrual_factor", e.accrual_factor)?;
        if accrual_factor == Rate::ZERO {
            return Err(Error::Config("economics.accrual_factor must be positive".into()));
        }
        let wps_fractions = w
            .wps_fractions
            .iter()
            .map(|x| ratio("workflow.wps_fractions", *x))
            .collect::<Result<Vec<_>>>()?;
        let schedule_ticks = w.duration_profile.ticks(w.ticks_per_month);
        let weights = [
            rate("fraud.weights", f.weights[0])?,
            rate("fraud.weights", f.weights[1])?,
            rate("fraud.weights", f.weights[2])?,
        ];
        Ok(Params {
            accrual_factor,
            wps_fractions,
            anticipation_fraction: ratio("workflow.anticipation_fraction", w.anticipation_fraction)?,
            architect_share: ratio("economics.architect_share", e.architect_share)?,
            auditor_share: ratio("economics.auditor_share", e.auditor_share)?,
            supplier_share: ratio("economics.supplier_share", e.supplier_share)?,
            ticks_per_month: w.ticks_per_month,
            schedule_ticks,
            c1_grace_ticks: w.c1_grace_ticks.unwrap_or(schedule_ticks / 10),
            c2_period_ticks: w.c2_period_ticks,
            max_active_per_client: w.max_active_per_client,
            fraud: FraudParams {
                suspicion_rate: ratio("fraud.suspicion_rate", f.suspicion_rate)?,
                weights,
                limit: rate("fraud.limit", f.limit)?,
                penalty: f.penalty,
                scoring: f.scoring,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadError {
    Io(String),
    Invalid(Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(msg) => write!(f, "cannot read config: {msg}"),
            LoadError::Invalid(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for LoadError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_scenario() {
        let config = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(config, ScenarioConfig::default());
        let params = config.params().unwrap();
        assert_eq!(params.schedule_ticks, 240);
        assert_eq!(params.c1_grace_ticks, 24);
        assert_eq!(params, Params::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ScenarioConfig::from_toml("sed = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        let err = ScenarioConfig::from_toml("[thresholds]\ntechnical = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("thresholds.technical"));
    }

    #[test]
    fn inverted_value_range_is_rejected() {
        assert!(ScenarioConfig::from_toml("[workflow]\nvalue_range = [5, 4]\n").is_err());
    }

    #[test]
    fn custom_profile_parses() {
        let config = ScenarioConfig::from_toml("[workflow]\nduration_profile = { custom-ticks = 90 }\n").unwrap();
        assert_eq!(config.params().unwrap().schedule_ticks, 90);
    }

    #[test]
    fn round_trips_through_toml() {
        let config = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml(&config.to_toml()).unwrap(), config);
    }
}
