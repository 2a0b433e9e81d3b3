//! `discover` configuration file.

use pi_forge::buckinet::{GridConfig, TrainConfig};
use pi_forge::dsindy::{LibraryConfig, StlsqConfig, SweepConfig};
use pi_forge::optfit::OptConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverConfig {
    pub seed: Option<u64>,
    /// Number of groups for `optfit` and `buckinet`.
    pub groups: Option<usize>,
    pub anchor: Option<String>,
    pub optfit: OptConfig,
    pub buckinet: BuckiNetSection,
    pub dsindy: DsindySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuckiNetSection {
    pub train: TrainConfig,
    /// Hyperparameter grid; a single training run when absent.
    pub grid: Option<GridConfig>,
    /// Principal components kept per run for `--runs` input.
    pub pca_rank: usize,
    /// Exponent bound of the candidates the learned groups are snapped to.
    pub snap_bound: i64,
}

impl Default for BuckiNetSection {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            grid: None,
            pca_rank: 3,
            snap_bound: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsindySection {
    pub bound: i64,
    /// Ranked combinations kept in the result.
    pub report: usize,
    pub library: LibraryConfig,
    pub stlsq: StlsqConfig,
    pub pick_k: usize,
    pub rank_weight: f64,
    pub cap: u64,
    pub decimate: usize,
    pub trim: usize,
}

impl Default for DsindySection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            bound: 2,
            report: 10,
            library: s.library,
            stlsq: s.stlsq,
            pick_k: s.pick_k,
            rank_weight: s.rank_weight,
            cap: s.cap,
            decimate: s.decimate,
            trim: s.trim,
        }
    }
}

impl DsindySection {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            library: self.library.clone(),
            stlsq: self.stlsq.clone(),
            pick_k: self.pick_k,
            rank_weight: self.rank_weight,
            cap: self.cap,
            decimate: self.decimate,
            trim: self.trim,
        }
    }
}

impl DiscoverConfig {
    /// Parses a config file. Seeds belong at the top level only.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let value: toml::Table = toml::from_str(text).map_err(config_error)?;
        for section in ["optfit", "buckinet"] {
            let nested = value.get(section).and_then(|v| v.as_table());
            let has_seed = nested.is_some_and(|t| {
                t.contains_key("seed") || t.get("train").and_then(|v| v.as_table()).is_some_and(|t| t.contains_key("seed"))
            });
            if has_seed {
                return Err(CliError::Core(pi_forge::Error::Config(format!(
                    "set `seed` at the top level, not in [{section}]"
                ))));
            }
        }
        toml::from_str(text).map_err(config_error)
    }
}

fn config_error(e: toml::de::Error) -> CliError {
    CliError::Core(pi_forge::Error::Config(e.to_string().trim().replace('\n', " ")))
}
