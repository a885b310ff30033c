//! Run configuration: every tunable of a run in one TOML document.

use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::dataset::{IngestSchema, LoadDataset};
use crate::data::synthetic::SyntheticProfileConfig;
use crate::domain::{default_appliance_table, ApplianceTemplate};
use crate::dqn::DqnConfig;
use crate::environment::EpisodeConfig;
use crate::error::{Error, Result};

/// Day selection: `A..B` (half-open day indices) or
/// `YYYY-MM-DD..YYYY-MM-DD` (inclusive dates).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayRange(pub String);

impl DayRange {
    pub fn resolve(&self, dataset: &LoadDataset) -> Result<Range<usize>> {
        let (a, b) = self
            .0
            .split_once("..")
            .ok_or_else(|| Error::config(format!("day range {:?} must look like A..B", self.0)))?;
        let (a, b) = (a.trim(), b.trim());
        let range = if let (Ok(a), Ok(b)) = (a.parse::<usize>(), b.parse::<usize>()) {
            a..b
        } else {
            let date = |s: &str| {
                chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|_| Error::config(format!("bad date {s:?} in day range {:?}", self.0)))
            };
            let (from, to) = (date(a)?, date(b)?);
            let start = dataset
                .day_index(from)
                .ok_or_else(|| Error::data(format!("date {from} is not in the dataset")))?;
            let end = dataset
                .day_index(to)
                .ok_or_else(|| Error::data(format!("date {to} is not in the dataset")))?;
            start..end + 1
        };
        if range.is_empty() {
            return Err(Error::config(format!("day range {:?} is empty", self.0)));
        }
        if range.end > dataset.num_days() {
            return Err(Error::data(format!(
                "day range {:?} ends after the dataset's last day {}",
                self.0,
                dataset.date(dataset.num_days().saturating_sub(1))
            )));
        }
        Ok(range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub episodes: u64,
    pub train_days: DayRange,
    pub eval_days: DayRange,
    /// Episodes between checkpoint saves (0 saves only at the end).
    pub checkpoint_every: u64,
    /// Stop after this many environment steps in total.
    pub max_steps: Option<u64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 5000,
            train_days: DayRange("10..30".into()),
            eval_days: DayRange("30..61".into()),
            checkpoint_every: 100,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset CSV; synthetic data is generated when absent.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub episode: EpisodeConfig,
    pub dqn: DqnConfig,
    pub training: TrainingConfig,
    pub synthetic: SyntheticProfileConfig,
    pub appliances: Vec<ApplianceTemplate>,
    pub ingest: IngestSchema,
    pub paths: PathsConfig,
    /// Values of the aggregator weighting for the sweep command.
    pub rho_sweep: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            episode: EpisodeConfig::default(),
            dqn: DqnConfig::default(),
            training: TrainingConfig::default(),
            synthetic: SyntheticProfileConfig::default(),
            appliances: default_appliance_table(),
            ingest: IngestSchema::default(),
            paths: PathsConfig::default(),
            rho_sweep: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.dqn.validate()?;
        if self.appliances.is_empty() {
            return Err(Error::config("appliance table is empty"));
        }
        for a in &self.appliances {
            a.validate()?;
        }
        self.synthetic.validate(&self.appliances)?;
        if self.rho_sweep.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("rho values must lie in [0, 1]"));
        }
        for r in [&self.training.train_days, &self.training.eval_days] {
            if !r.0.contains("..") {
                return Err(Error::config(format!("day range {:?} must look like A..B", r.0)));
            }
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form, ignoring `paths` (the dataset is
    /// identified by its own fingerprint).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths = PathsConfig::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}
