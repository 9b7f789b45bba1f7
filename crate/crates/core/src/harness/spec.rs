use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::NetworkConfig;
use crate::channel::ChannelDistribution;
use crate::quantizer::{
    design_fixed_point, design_general, design_max_entropy, design_uniform, QuantizationVector,
    QuantizerError,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("could not read spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[serde(alias = "AdaptiveVsFixed")]
    AdaptiveVsFixed,
    #[serde(alias = "LossRatioVsSnr")]
    LossRatioVsSnr,
    #[serde(alias = "DecayVsN")]
    DecayVsN,
    #[serde(alias = "BitAllocationSweep")]
    BitAllocationSweep,
    #[serde(alias = "CentralNodeComparison")]
    CentralNodeComparison,
    #[serde(alias = "Custom")]
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::AdaptiveVsFixed => "adaptive_vs_fixed",
            Scenario::LossRatioVsSnr => "loss_ratio_vs_snr",
            Scenario::DecayVsN => "decay_vs_n",
            Scenario::BitAllocationSweep => "bit_allocation_sweep",
            Scenario::CentralNodeComparison => "central_node_comparison",
            Scenario::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_n_sources")]
    pub n_sources: usize,
    #[serde(default = "default_gamma_sr_db")]
    pub gamma_sr_db: OneOrMany,
    #[serde(default = "default_gamma_rd_db")]
    pub gamma_rd_db: f64,
}

fn default_n_sources() -> usize {
    2
}

fn default_gamma_sr_db() -> OneOrMany {
    OneOrMany::One(25.0)
}

fn default_gamma_rd_db() -> f64 {
    20.0
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            n_sources: default_n_sources(),
            gamma_sr_db: default_gamma_sr_db(),
            gamma_rd_db: default_gamma_rd_db(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Uniform,
    Rayleigh,
    Tabulated { csv: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMethod {
    /// `general` from two levels up; the fixed-point design for a single level.
    Proposed,
    Uniform,
    General,
    FixedPoint,
    MaxEntropy,
}

impl QuantizerMethod {
    pub fn name(self) -> &'static str {
        match self {
            QuantizerMethod::Proposed => "proposed",
            QuantizerMethod::Uniform => "uniform",
            QuantizerMethod::General => "general",
            QuantizerMethod::FixedPoint => "fixed_point",
            QuantizerMethod::MaxEntropy => "max_entropy",
        }
    }

    pub fn design(
        self,
        n_levels: usize,
        gamma: f64,
        dist: &ChannelDistribution,
    ) -> Result<QuantizationVector, QuantizerError> {
        match self {
            QuantizerMethod::Proposed if n_levels < 2 => design_fixed_point(n_levels, gamma, dist),
            QuantizerMethod::Proposed | QuantizerMethod::General => {
                design_general(n_levels, gamma, dist, None)
            }
            QuantizerMethod::Uniform => design_uniform(n_levels, gamma),
            QuantizerMethod::FixedPoint => design_fixed_point(n_levels, gamma, dist),
            QuantizerMethod::MaxEntropy => design_max_entropy(n_levels, gamma, dist),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSpec {
    pub methods: Vec<QuantizerMethod>,
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    #[serde(default)]
    pub network: NetworkSpec,
    /// One law for every link, or one per link (sources first, relay last).
    #[serde(default)]
    pub distributions: Vec<DistSpec>,
    #[serde(default)]
    pub snr_grid_db: Option<Vec<f64>>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub k_max_grid: Option<Vec<u32>>,
    #[serde(default = "default_n_trials")]
    pub n_trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_fixed_design_snr_db")]
    pub fixed_design_snr_db: f64,
    #[serde(default = "default_bits_per_link")]
    pub bits_per_link: u32,
    #[serde(default = "default_target_percent")]
    pub target_percent: f64,
    #[serde(default)]
    pub r1_override: Option<f64>,
    #[serde(default)]
    pub custom: Option<CustomSpec>,
}

fn default_n_trials() -> u64 {
    50_000
}

fn default_fixed_design_snr_db() -> f64 {
    10.0
}

fn default_bits_per_link() -> u32 {
    2
}

fn default_target_percent() -> f64 {
    80.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a spec file; relative tabulated-law paths are taken relative to it.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        let path = path.as_ref();
        let mut spec = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut spec.distributions {
            if let DistSpec::Tabulated { csv } = d {
                if csv.is_relative() {
                    *csv = base.join(&*csv);
                }
            }
        }
        Ok(spec)
    }

    pub fn uses_monte_carlo(&self) -> bool {
        match self.scenario {
            Scenario::LossRatioVsSnr
            | Scenario::BitAllocationSweep
            | Scenario::CentralNodeComparison => true,
            Scenario::Custom => self.custom.as_ref().is_some_and(|c| c.monte_carlo),
            Scenario::AdaptiveVsFixed | Scenario::DecayVsN => false,
        }
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        self.snr_grid_db
            .clone()
            .unwrap_or_else(|| match self.scenario {
                Scenario::LossRatioVsSnr => (0..=10).map(|i| 10.0 + 2.0 * i as f64).collect(),
                Scenario::DecayVsN => vec![10.0, 20.0],
                _ => (0..=20).map(|i| 2.0 * i as f64).collect(),
            })
    }

    pub fn n_grid_raw(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| match self.scenario {
            Scenario::DecayVsN => (2..=8).map(|k| 1usize << k).collect(),
            Scenario::AdaptiveVsFixed => vec![3, 7],
            _ => vec![3, 7, 15],
        })
    }

    /// Which quantizer methods the scenario runs on the level grid.
    fn grid_methods(&self) -> Vec<QuantizerMethod> {
        match self.scenario {
            Scenario::AdaptiveVsFixed | Scenario::DecayVsN => vec![QuantizerMethod::General],
            Scenario::Custom => self
                .custom
                .as_ref()
                .map(|c| c.methods.clone())
                .unwrap_or_default(),
            _ => vec![],
        }
    }

    /// Level grid with sizes the chosen designers cannot handle removed.
    pub fn n_grid(&self) -> Vec<usize> {
        let needs_two = self.grid_methods().contains(&QuantizerMethod::General);
        self.n_grid_raw()
            .into_iter()
            .filter(|n| !needs_two || *n >= 2 || self.scenario == Scenario::Custom)
            .collect()
    }

    pub fn k_max_grid(&self) -> Vec<u32> {
        self.k_max_grid.clone().unwrap_or_else(|| {
            let links = self.network.n_sources as u32 + 1;
            (links..=links + 9).collect()
        })
    }

    fn default_distribution(&self) -> DistSpec {
        match self.scenario {
            Scenario::AdaptiveVsFixed => DistSpec::Uniform,
            _ => DistSpec::Rayleigh,
        }
    }

    /// One law per link, sources first and the relay link last.
    pub fn link_distributions(&self) -> Result<Vec<ChannelDistribution>, SpecError> {
        let links = self.network.n_sources + 1;
        let specs = match self.distributions.len() {
            0 => vec![self.default_distribution(); links],
            1 => vec![self.distributions[0].clone(); links],
            n if n == links => self.distributions.clone(),
            n => {
                return Err(invalid(
                    "distributions",
                    format!("expected 1 or {links} entries, got {n}"),
                ))
            }
        };
        specs
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                DistSpec::Uniform => Ok(ChannelDistribution::uniform()),
                DistSpec::Rayleigh => Ok(ChannelDistribution::rayleigh()),
                DistSpec::Tabulated { csv } => {
                    ChannelDistribution::from_csv_path(csv).map_err(|e| {
                        invalid(
                            format!(
                                "distributions[{}].tabulated.csv",
                                i.min(self.distributions.len() - 1)
                            ),
                            e.to_string(),
                        )
                    })
                }
            })
            .collect()
    }

    /// Linear-scale network. Scenarios that sweep SNR override these values.
    pub fn network_config(&self) -> Result<NetworkConfig, SpecError> {
        let ns = self.network.n_sources;
        let sr_db = match &self.network.gamma_sr_db {
            OneOrMany::One(x) => vec![*x; ns],
            OneOrMany::Many(v) if v.len() == ns => v.clone(),
            OneOrMany::Many(v) => {
                return Err(invalid(
                    "network.gamma_sr_db",
                    format!("expected {ns} entries, got {}", v.len()),
                ))
            }
        };
        NetworkConfig::new(
            sr_db.into_iter().map(db_to_linear).collect(),
            db_to_linear(self.network.gamma_rd_db),
        )
        .map_err(|e| invalid("network", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecWarning {
    UnderpoweredMc { n_trials: u64, recommended: u64 },
    DegenerateKappa { n_levels: usize },
}

impl std::fmt::Display for SpecWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpecWarning::UnderpoweredMc { n_trials, recommended } => write!(
                f,
                "UnderpoweredMC: {n_trials} trials give percent-level error bars; use at least {recommended}"
            ),
            SpecWarning::DegenerateKappa { n_levels } => write!(
                f,
                "DegenerateKappa: the consistency-corrected design needs N >= 2; N = {n_levels} dropped from n_grid"
            ),
        }
    }
}

const RECOMMENDED_TRIALS: u64 = 10_000;

/// Checks the spec and returns non-fatal advisories.
pub fn validate_spec(spec: &ExperimentSpec) -> Result<Vec<SpecWarning>, SpecError> {
    let sc = spec.scenario;
    if spec.network.n_sources == 0 {
        return Err(invalid("network.n_sources", "must be at least 1"));
    }
    spec.network_config()?;
    spec.link_distributions()?;
    if spec.n_trials == 0 {
        return Err(invalid("n_trials", "must be positive"));
    }
    let uses_snr = matches!(
        sc,
        Scenario::AdaptiveVsFixed
            | Scenario::LossRatioVsSnr
            | Scenario::DecayVsN
            | Scenario::Custom
    );
    let uses_n = matches!(
        sc,
        Scenario::AdaptiveVsFixed | Scenario::DecayVsN | Scenario::Custom
    );
    let uses_k = matches!(
        sc,
        Scenario::BitAllocationSweep | Scenario::CentralNodeComparison
    );

    if uses_snr {
        let grid = spec.snr_grid();
        if grid.is_empty() {
            return Err(invalid("snr_grid_db", "must be nonempty"));
        }
        if let Some(i) = grid.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("snr_grid_db[{i}]"), "must be finite"));
        }
    }
    if !spec.fixed_design_snr_db.is_finite() {
        return Err(invalid("fixed_design_snr_db", "must be finite"));
    }
    let mut warnings = BTreeSet::new();
    if uses_n {
        let grid = spec.n_grid_raw();
        if grid.is_empty() {
            return Err(invalid("n_grid", "must be nonempty"));
        }
        if let Some(i) = grid.iter().position(|n| *n == 0) {
            return Err(invalid(format!("n_grid[{i}]"), "must be positive"));
        }
        if spec.grid_methods().contains(&QuantizerMethod::General) {
            for n in grid.iter().filter(|n| **n < 2) {
                warnings.insert(SpecWarning::DegenerateKappa { n_levels: *n });
            }
        }
        if spec.n_grid().is_empty() {
            return Err(invalid("n_grid", "no usable level counts remain"));
        }
    }
    if uses_k {
        let grid = spec.k_max_grid();
        if grid.is_empty() {
            return Err(invalid("k_max_grid", "must be nonempty"));
        }
        let links = spec.network.n_sources as u32 + 1;
        if let Some(i) = grid.iter().position(|k| *k < links) {
            return Err(invalid(
                format!("k_max_grid[{i}]"),
                format!("must be at least {links}"),
            ));
        }
    }
    if sc == Scenario::LossRatioVsSnr && !(1..=16).contains(&spec.bits_per_link) {
        return Err(invalid("bits_per_link", "must be between 1 and 16"));
    }
    if sc == Scenario::BitAllocationSweep
        && !(spec.target_percent > 0.0 && spec.target_percent < 100.0)
    {
        return Err(invalid(
            "target_percent",
            "must lie strictly between 0 and 100",
        ));
    }
    if let Some(r1) = spec.r1_override {
        if !r1.is_finite() || r1 <= 1.0 {
            return Err(invalid("r1_override", "must exceed 1"));
        }
    }
    match (&spec.custom, sc) {
        (None, Scenario::Custom) => {
            return Err(invalid("custom", "required for the custom scenario"))
        }
        (Some(c), Scenario::Custom) if c.methods.is_empty() => {
            return Err(invalid("custom.methods", "must be nonempty"))
        }
        (Some(c), Scenario::Custom) => {
            let forbidden = c
                .methods
                .iter()
                .position(|m| *m == QuantizerMethod::Uniform);
            if forbidden.is_some()
                && spec
                    .link_distributions()?
                    .iter()
                    .any(|d| d.support_max() != 2.0)
            {
                return Err(invalid(
                    format!("custom.methods[{}]", forbidden.unwrap_or(0)),
                    "the closed-form uniform design needs the uniform law on [0, 2]",
                ));
            }
        }
        (Some(_), _) => return Err(invalid("custom", "only allowed for the custom scenario")),
        (None, _) => {}
    }
    if spec.uses_monte_carlo() && spec.n_trials < RECOMMENDED_TRIALS {
        warnings.insert(SpecWarning::UnderpoweredMc {
            n_trials: spec.n_trials,
            recommended: RECOMMENDED_TRIALS,
        });
    }
    Ok(warnings.into_iter().collect())
}
