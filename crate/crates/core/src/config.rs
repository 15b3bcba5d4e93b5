//! Experiment configuration: one JSON or TOML file drives every command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::MAX_DT;
use crate::error::{config, Result};
use crate::functionals::{MarkFunction, MassProfile};
use crate::intensity::IntensityModel;
use crate::space::TorusSpace;
use crate::verify::CheckSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Gamma,
    SmoothedLogPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelName,
    /// Required by `smoothed_log_power`, rejected for `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Smallest sampled mass.
    pub epsilon: f64,
}

impl ModelConfig {
    pub fn build(&self) -> Result<IntensityModel> {
        match (self.name, self.alpha) {
            (ModelName::Gamma, None) => Ok(IntensityModel::gamma()),
            (ModelName::Gamma, Some(_)) => Err(config("model.alpha is not a parameter of the gamma model")),
            (ModelName::SmoothedLogPower, Some(a)) => IntensityModel::smoothed_log_power(a),
            (ModelName::SmoothedLogPower, None) => Err(config("model.alpha is required for smoothed_log_power")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_side")]
    pub side: f64,
}

fn default_dim() -> usize {
    2
}

fn default_side() -> f64 {
    1.0
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            side: default_side(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    /// Independent measures drawn by `sample`.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_replicas() -> usize {
    1
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            replicas: default_replicas(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    /// Snapshot times, nondecreasing.
    pub times: Vec<f64>,
}

/// A named linear observable `⟨⟨φ, η⟩⟩` recorded by `sample` and `evolve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub mark: MarkFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableConfig>,
    /// Checks run by `verify`; empty means the whole suite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckSpec>,
}

/// Everything a command needs, built from a validated configuration.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: IntensityModel,
    pub space: TorusSpace,
    /// Hex SHA-256 of the canonical JSON form of the configuration as read,
    /// before any seed override.
    pub hash: String,
}

impl ExperimentConfig {
    /// Parses TOML for a `.toml` extension and JSON otherwise.
    pub fn parse(text: &str, toml_format: bool) -> Result<Self> {
        if toml_format {
            toml::from_str(text).map_err(|e| config(format!("invalid TOML config: {e}")))
        } else {
            serde_json::from_str(text).map_err(|e| config(format!("invalid JSON config: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::parse(&text, is_toml)
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.model.epsilon;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(config(format!("model.epsilon must lie in (0, 1), got {eps}")));
        }
        self.model.build()?;
        let space = TorusSpace::new(self.space.dim, self.space.side)?;
        if self.sample.replicas == 0 {
            return Err(config("sample.replicas must be positive"));
        }
        if let Some(d) = &self.dynamics {
            if !(d.dt > 0.0 && d.dt <= MAX_DT) {
                return Err(config(format!("dynamics.dt must lie in (0, {MAX_DT}], got {}", d.dt)));
            }
            if d.times.is_empty() {
                return Err(config("dynamics.times must not be empty"));
            }
            if d.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || d.times.windows(2).any(|w| w[1] < w[0]) {
                return Err(config("dynamics.times must be finite, nonnegative and nondecreasing"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for o in &self.observables {
            if !names.insert(o.name.as_str()) {
                return Err(config(format!("observable {:?} is declared twice", o.name)));
            }
            if !matches!(o.mark.chi, MassProfile::Constant { .. }) {
                o.mark.chi.validate()?;
            }
            o.mark.u.validate(&space)?;
        }
        for c in &self.checks {
            c.resolve()?;
        }
        Ok(())
    }

    /// Validates and builds the model and space. `seed` overrides the file's seed.
    pub fn into_experiment(mut self, seed: Option<u64>) -> Result<Experiment> {
        self.validate()?;
        let hash = self.hash();
        if let Some(s) = seed {
            self.seed = s;
        }
        let model = self.model.build()?;
        let space = TorusSpace::new(self.space.dim, self.space.side)?;
        Ok(Experiment {
            config: self,
            model,
            space,
            hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const MINIMAL: &str = r#"
        seed = 7
        [model]
        name = "gamma"
        epsilon = 1e-3
    "#;

    #[test]
    fn minimal_toml_and_equivalent_json_hash_alike() {
        let a = ExperimentConfig::parse(MINIMAL, true).unwrap();
        let b = ExperimentConfig::parse(r#"{"seed":7,"model":{"name":"gamma","epsilon":0.001}}"#, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.space, SpaceConfig { dim: 2, side: 1.0 });
        a.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\ncolour = 3\n");
        assert!(matches!(ExperimentConfig::parse(&bad, true), Err(Error::Config(_))));
        let bad = r#"{"seed":1,"model":{"name":"gamma","epsilon":0.001,"shape":2}}"#;
        assert!(matches!(ExperimentConfig::parse(bad, false), Err(Error::Config(_))));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = ExperimentConfig::parse(MINIMAL, true).unwrap();
        c.model.epsilon = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::parse(MINIMAL, true).unwrap();
        c.dynamics = Some(DynamicsConfig {
            dt: 2e-2,
            times: vec![0.0, 0.1],
        });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::parse(MINIMAL, true).unwrap();
        c.model.alpha = Some(1.0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::parse(MINIMAL, true).unwrap();
        c.model.name = ModelName::SmoothedLogPower;
        assert!(c.validate().is_err());
        c.model.alpha = Some(1.0);
        c.validate().unwrap();
    }

    #[test]
    fn seed_override_keeps_the_hash() {
        let c = ExperimentConfig::parse(MINIMAL, true).unwrap();
        let h = c.hash();
        let e = c.into_experiment(Some(99)).unwrap();
        assert_eq!(e.config.seed, 99);
        assert_eq!(e.hash, h);
    }

    #[test]
    fn checks_and_observables_parse() {
        let text = r#"
            seed = 1
            [model]
            name = "smoothed_log_power"
            alpha = 1.0
            epsilon = 1e-4
            [dynamics]
            dt = 1e-3
            times = [0.0, 0.05]
            [[observables]]
            name = "fourier"
            mark = { chi = { kind = "bump", lo = 0.1, hi = 5.0 }, u = { kind = "fourier", k = [1, 0], phase = 0.0, amplitude = 1.0 } }
            [[checks]]
            name = "mecke"
            replicas = 1000
            [[checks]]
            name = "quasi_invariance"
            inject = "corrupt_density"
        "#;
        let c = ExperimentConfig::parse(text, true).unwrap();
        c.validate().unwrap();
        assert_eq!(c.checks.len(), 2);
        let bad = text.replace("\"mecke\"", "\"meck\"");
        assert!(ExperimentConfig::parse(&bad, true).is_err());
    }
}
