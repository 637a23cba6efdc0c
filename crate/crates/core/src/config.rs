//! Run configuration: one JSON file describes an experiment completely.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprtree::OpVocabulary;
use crate::inference::FitOptions;
use crate::phase::{PlantedModel, PlantedSpec, SweepSpec, TrialSettings, DEFAULT_TOL_GAP};
use crate::prior::{OpPrior, PriorConfig};
use crate::sampler::{SamplerOptions, DEFAULT_ENUMERATION_LIMIT};

/// Either a path to a prior file (relative to the config file) or the
/// table inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSource {
    Path(PathBuf),
    Inline {
        ops: std::collections::BTreeMap<String, OpPrior>,
    },
}

/// Fixed inputs for the transition formulas, bypassing the Monte Carlo
/// estimate and the prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionInputs {
    pub delta2: f64,
    pub delta_m: f64,
    pub k: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionSpec {
    /// Defaults to the sweep's `N` values.
    pub n_values: Option<Vec<usize>>,
    pub inputs: Option<TransitionInputs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateSpec {
    pub max_nodes: usize,
    pub limit: usize,
}

impl Default for EnumerateSpec {
    fn default() -> Self {
        Self {
            max_nodes: 5,
            limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub vocabulary: OpVocabulary,
    /// Number of input variables.
    #[serde(default = "one")]
    pub dimension: usize,
    /// Uniform default hyperparameters when absent.
    #[serde(default)]
    pub prior: Option<PriorSource>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub sampler: SamplerOptions,
    #[serde(default)]
    pub planted: Vec<PlantedSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "default_tol_gap")]
    pub tol_gap: f64,
    #[serde(default)]
    pub transition: TransitionSpec,
    #[serde(default)]
    pub enumerate: EnumerateSpec,
    /// Data file for `discover` and `enumerate`, relative to the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Master seed. Required: runs are never seeded from the clock.
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_tol_gap() -> f64 {
    DEFAULT_TOL_GAP
}

impl RunConfig {
    /// Parses and validates a config; relative paths resolve against
    /// `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if !(self.tol_gap >= 0.0 && self.tol_gap.is_finite()) {
            return Err(Error::Validation("tol_gap must be finite and >= 0".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Validation("jobs must be at least 1".into()));
        }
        self.fit.validate()?;
        self.sampler.validate()?;
        self.sweep.validate()?;
        self.prior_config()?;
        self.planted_models()?;
        if let Some(t) = &self.transition.inputs {
            if !(t.delta2 >= 0.0) || !t.delta_m.is_finite() || t.k == 0 {
                return Err(Error::Validation(
                    "transition inputs need delta2 >= 0, finite delta_m and k >= 1".into(),
                ));
            }
        }
        if self.transition.n_values.as_ref().is_some_and(|ns| ns.iter().any(|&n| n < 2)) {
            return Err(Error::Validation("transition N values must be at least 2".into()));
        }
        if self.enumerate.max_nodes == 0 || self.enumerate.limit == 0 {
            return Err(Error::Validation("enumerate needs max_nodes and limit >= 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn prior_config(&self) -> Result<PriorConfig> {
        match &self.prior {
            None => Ok(PriorConfig::default_for(&self.vocabulary)),
            Some(PriorSource::Path(p)) => PriorConfig::load(&self.resolve(p), &self.vocabulary),
            Some(PriorSource::Inline { ops }) => {
                let text = serde_json::json!({ "ops": ops }).to_string();
                PriorConfig::from_json_str(&text, &self.vocabulary)
            }
        }
    }

    /// Planted models parsed against the vocabulary and dimension.
    pub fn planted_models(&self) -> Result<Vec<PlantedModel>> {
        let mut ids = std::collections::HashSet::new();
        self.planted
            .iter()
            .map(|spec| {
                if !ids.insert(spec.id.as_str()) {
                    return Err(Error::Validation(format!("duplicate planted model id `{}`", spec.id)));
                }
                PlantedModel::from_spec(spec, &self.vocabulary, self.dimension).map_err(|e| {
                    Error::Validation(format!("planted model `{}`: {e}", spec.id))
                })
            })
            .collect()
    }

    pub fn trial_settings(&self) -> Result<TrialSettings> {
        Ok(TrialSettings {
            vocab: self.vocabulary.clone(),
            prior: self.prior_config()?,
            fit: self.fit.clone(),
            sampler: self.sampler.clone(),
            tol_gap: self.tol_gap,
        })
    }

    /// `N` values for the transition table.
    pub fn transition_n_values(&self) -> &[usize] {
        self.transition
            .n_values
            .as_deref()
            .unwrap_or(&self.sweep.n_values)
    }
}
