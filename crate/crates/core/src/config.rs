//! Optional TOML configuration. Every key has a default; command-line
//! flags override file values.
//!
//! ```toml
//! [llm]
//! backend = "mock"
//! base_url = "http://localhost:8000/v1"
//! model = "gpt-3.5-turbo-instruct"
//! timeout_s = 20
//! retries = 2
//!
//! [scheduler]
//! tau_s = 300
//! drain = "event"      # or "timer"
//! tick_s = 5
//! clock = "last_shown" # or "head_trigger"
//!
//! [server]
//! port = 8080
//! log_dir = "logs"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::{BackendKind, LiveConfig, LlmError, LlmGateway, DEFAULT_RETRIES, DEFAULT_TIMEOUT_S};
use crate::pipeline::Pipeline;
use crate::prompt::{GenerationParams, PromptBuilder, TemplateSet, DEFAULT_MODEL};
use crate::scheduler::{ClockMode, DrainMode, SchedulerConfig, DEFAULT_TAU_S};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] crate::prompt::TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub retries: u32,
    pub max_in_flight: usize,
    /// Directory with `<intervention>.txt` files replacing built-in templates.
    pub template_dir: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        let params = GenerationParams::default();
        LlmSection {
            backend: BackendKind::Mock,
            base_url: "http://localhost:8000/v1".into(),
            model: DEFAULT_MODEL.into(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            timeout_s: DEFAULT_TIMEOUT_S,
            retries: DEFAULT_RETRIES,
            max_in_flight: crate::llm::DEFAULT_MAX_IN_FLIGHT,
            template_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrainKind {
    Event,
    Timer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub tau_s: f64,
    pub drain: DrainKind,
    pub tick_s: f64,
    pub clock: ClockMode,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            tau_s: DEFAULT_TAU_S,
            drain: DrainKind::Event,
            tick_s: 5.0,
            clock: ClockMode::LastShown,
        }
    }
}

impl SchedulerSection {
    pub fn to_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            tau_s: self.tau_s,
            drain: match self.drain {
                DrainKind::Event => DrainMode::EventDriven,
                DrainKind::Timer => DrainMode::Timer { interval_s: self.tick_s },
            },
            clock: self.clock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub port: u16,
    pub log_dir: Option<PathBuf>,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            port: 8080,
            log_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub llm: LlmSection,
    pub scheduler: SchedulerSection,
    pub server: ServerSection,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text, &path.display().to_string())
    }

    /// `path` if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    /// Gateway for the configured backend. A live backend needs
    /// `LLM_API_KEY`; its absence is reported here, at startup.
    pub fn gateway(&self) -> Result<LlmGateway, ConfigError> {
        let gateway = match self.llm.backend {
            BackendKind::Mock => LlmGateway::mock(),
            BackendKind::Live => LlmGateway::live(LiveConfig::from_env(self.llm.base_url.clone())?)?,
        };
        Ok(gateway.with_max_in_flight(self.llm.max_in_flight))
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        let templates = match &self.llm.template_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::builtin(),
        };
        let params = GenerationParams {
            model: self.llm.model.clone(),
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
        };
        let mut pipeline = Pipeline::new(self.gateway()?);
        pipeline.builder = PromptBuilder::new(templates, params);
        pipeline.timeout_s = self.llm.timeout_s;
        pipeline.retries = self.llm.retries;
        Ok(pipeline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(Config::parse("", "-").unwrap(), Config::default());
    }

    #[test]
    fn sections() {
        let cfg = Config::parse(
            "[llm]\nbackend = \"live\"\nretries = 0\n[scheduler]\ntau_s = 15\ndrain = \"timer\"\ntick_s = 1\n",
            "-",
        )
        .unwrap();
        assert_eq!(cfg.llm.backend, BackendKind::Live);
        assert_eq!(cfg.llm.retries, 0);
        assert_eq!(cfg.scheduler.to_config().drain, DrainMode::Timer { interval_s: 1.0 });
        assert_eq!(cfg.scheduler.to_config().tau_s, 15.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::parse("[llm]\nbackedn = \"mock\"\n", "x.toml").is_err());
    }
}
