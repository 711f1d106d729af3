//! Run configuration: a TOML file with one section per subsystem, plus a
//! handful of command-line overrides. Every run echoes its fully-resolved
//! configuration next to its outputs so it can be reproduced exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gridsafe_core::env::EnvConfig;
use gridsafe_core::learner::LearnerConfig;
use gridsafe_core::replay::RefinementConfig;
use gridsafe_core::trainer::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisorConfig {
    /// off | rule | mock | remote
    #[serde(default = "default_mode")]
    pub mode: String,
    /// directory of canned responses (mode = mock)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_dir: Option<PathBuf>,
    /// HTTP endpoint (mode = remote)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_mode() -> String {
    "off".to_string()
}

fn default_timeout() -> u64 {
    30
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        AdvisorConfig {
            mode: default_mode(),
            mock_dir: None,
            endpoint: None,
            model: None,
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// case file path; omitted = bundled 5-bus case
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<PathBuf>,
    /// chronics CSV path; omitted = bundled stressed chronics
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chronics: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub advisor: AdvisorConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: None,
            chronics: None,
            output_dir: default_output_dir(),
            env: EnvConfig::default(),
            learner: LearnerConfig::default(),
            trainer: TrainerConfig::default(),
            refinement: RefinementConfig::default(),
            advisor: AdvisorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.advisor.mode.as_str() {
            "off" | "rule" => {}
            "mock" => {
                if self.advisor.mock_dir.is_none() {
                    return Err("advisor mode 'mock' requires advisor.mock_dir".into());
                }
            }
            "remote" => {
                if self.advisor.endpoint.is_none() {
                    return Err("advisor mode 'remote' requires advisor.endpoint".into());
                }
            }
            other => {
                return Err(format!(
                    "unknown advisor mode {other:?} (expected off, rule, mock, or remote)"
                ))
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the fully-resolved config beside the run outputs.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf, String> {
        let path = dir.join("config.resolved.toml");
        std::fs::write(&path, self.to_toml())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_config_uses_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("no_such_key = 1").is_err());
    }

    #[test]
    fn remote_mode_requires_endpoint() {
        let mut cfg = RunConfig::default();
        cfg.advisor.mode = "remote".into();
        assert!(cfg.validate().is_err());
        cfg.advisor.endpoint = Some("http://localhost:1234/advise".into());
        assert!(cfg.validate().is_ok());
    }
}
