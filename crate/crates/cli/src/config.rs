use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cultural_har::evaluation::PartitionProtocol;
use cultural_har::model::PriorMode;
use cultural_har::providers::{ProviderDescriptor, ProviderKind};
use cultural_har::{Error, Result, TrainingConfig};
use serde::{Deserialize, Serialize};

/// Contents of the `--config` TOML file.
///
/// ```toml
/// seed = 42
///
/// [paths]
/// cache_dir = "cache"
/// out_dir = "out"
///
/// [training]
/// smoothing_alpha = 1.0
/// prior_mode = "uniform"
///
/// [protocol]
/// subsets_per_class = 3
/// subset_size = 4
///
/// [[providers]]
/// name = "fixture"
/// kind = "fixture"
/// ```
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default = "default_protocol")]
    pub protocol: PartitionProtocol,
    /// Tag sources. Empty means a single fixture provider that reads each
    /// record's locator.
    #[serde(default)]
    pub providers: Vec<ProviderDescriptor>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_alpha")]
    pub smoothing_alpha: f64,
    #[serde(default)]
    pub prior_mode: PriorMode,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_protocol() -> PartitionProtocol {
    PartitionProtocol::REPLICA
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            smoothing_alpha: default_alpha(),
            prior_mode: PriorMode::Uniform,
        }
    }
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: None,
            paths: Paths::default(),
            training: TrainingSection::default(),
            protocol: default_protocol(),
            providers: Vec::new(),
        }
    }
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<CliConfig> {
        let config: CliConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file, resolving its relative paths.
    pub fn load(path: &Path) -> Result<CliConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = CliConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.paths.cache_dir {
            resolve(p);
        }
        if let Some(p) = &mut self.paths.out_dir {
            resolve(p);
        }
        for desc in &mut self.providers {
            if desc.kind == ProviderKind::Fixture {
                if let Some(dir) = &desc.endpoint {
                    let mut p = PathBuf::from(dir);
                    resolve(&mut p);
                    desc.endpoint = Some(p.to_string_lossy().into_owned());
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let alpha = self.training.smoothing_alpha;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!(
                "training.smoothing_alpha: expected a finite non-negative number, got {alpha}"
            )));
        }
        if self.protocol.subsets_per_class == 0 {
            return Err(Error::Config("protocol.subsets_per_class: must be at least 1".into()));
        }
        if self.protocol.subset_size == Some(0) {
            return Err(Error::Config("protocol.subset_size: must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for (i, desc) in self.providers.iter().enumerate() {
            desc.validate()
                .map_err(|e| Error::Config(format!("providers[{i}]: {e}")))?;
            if !names.insert(desc.name.as_str()) {
                return Err(Error::Config(format!(
                    "providers[{i}].name: `{}` is used twice",
                    desc.name
                )));
            }
        }
        Ok(())
    }

    /// Provider list with the default fixture provider filled in.
    pub fn effective_providers(&self) -> Vec<ProviderDescriptor> {
        if self.providers.is_empty() {
            vec![ProviderDescriptor::fixture("fixture")]
        } else {
            self.providers.clone()
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            smoothing_alpha: self.training.smoothing_alpha,
            prior_mode: self.training.prior_mode,
            ..TrainingConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = CliConfig::from_toml("").unwrap();
        assert_eq!(c, CliConfig::default());
        assert_eq!(c.protocol, PartitionProtocol::REPLICA);
        assert_eq!(c.effective_providers().len(), 1);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = CliConfig::from_toml("[training]\nalpha = 2\n").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn bad_values_name_their_key() {
        let err = CliConfig::from_toml("[training]\nsmoothing_alpha = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("training.smoothing_alpha"), "{err}");

        let err = CliConfig::from_toml(
            "[[providers]]\nname = \"a\"\nkind = \"fixture\"\n[[providers]]\nname = \"a\"\nkind = \"fixture\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("providers[1].name"), "{err}");

        let err = CliConfig::from_toml("[[providers]]\nname = \"x\"\nkind = \"http_service\"\n").unwrap_err();
        assert!(err.to_string().contains("providers[0]"), "{err}");
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = CliConfig::from_toml(
            "[paths]\ncache_dir = \"cache\"\n[[providers]]\nname = \"f\"\nkind = \"fixture\"\nendpoint = \"tags\"\n",
        )
        .unwrap();
        c.resolve_paths(Path::new("/etc/har"));
        assert_eq!(c.paths.cache_dir.unwrap(), PathBuf::from("/etc/har/cache"));
        assert_eq!(c.providers[0].endpoint.as_deref(), Some("/etc/har/tags"));
    }
}
