//! Engine configuration, loadable from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field} must be at least 1")]
    NotPositive { field: &'static str },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemMode {
    #[default]
    MultiTurn,
    SingleTurn,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat-completion endpoint.
    #[default]
    OpenAi,
    /// Rules file replayed by [`crate::llm::ScriptedBackend`].
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmBackendConfig {
    pub kind: BackendKind,
    pub url: String,
    pub model: String,
    pub temperature: f32,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub script: Option<PathBuf>,
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        LlmBackendConfig {
            kind: BackendKind::OpenAi,
            url: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            api_key_env: "KGQA_LLM_API_KEY".to_string(),
            timeout_secs: 120,
            script: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Trigram,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub url: String,
    pub model: String,
    pub api_key_env: String,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Trigram,
            url: "https://api.openai.com/v1/embeddings".to_string(),
            model: "text-embedding-3-small".to_string(),
            api_key_env: "KGQA_LLM_API_KEY".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Retry bound for every validated LLM call.
    pub theta: u32,
    /// Answers per previous turn kept in the question context.
    pub context_limit: usize,
    /// Candidate vertices retrieved per entity.
    pub vertex_limit: usize,
    /// Candidate queries kept after truncation.
    pub query_num: usize,
    pub system_mode: SystemMode,
    pub endpoint_url: Option<String>,
    pub store_file: Option<PathBuf>,
    pub label_predicates: Vec<String>,
    pub llm: LlmBackendConfig,
    pub embedder: EmbedderConfig,
    pub translation_enabled: bool,
    pub reformulate: bool,
    /// Optional cap on predicates kept per relation; unbounded when absent.
    pub predicate_candidate_cap: Option<usize>,
    /// Directory receiving one JSON trace file per turn.
    pub trace_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            theta: 3,
            context_limit: 100,
            vertex_limit: 600,
            query_num: 40,
            system_mode: SystemMode::MultiTurn,
            endpoint_url: None,
            store_file: None,
            label_predicates: vec![RDFS_LABEL.to_string()],
            llm: LlmBackendConfig::default(),
            embedder: EmbedderConfig::default(),
            translation_enabled: false,
            reformulate: false,
            predicate_candidate_cap: None,
            trace_dir: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks: [(&'static str, bool); 4] = [
            ("theta", self.theta >= 1),
            ("context_limit", self.context_limit >= 1),
            ("vertex_limit", self.vertex_limit >= 1),
            ("query_num", self.query_num >= 1),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(ConfigError::NotPositive { field });
            }
        }
        if self.predicate_candidate_cap == Some(0) {
            return Err(ConfigError::NotPositive {
                field: "predicate_candidate_cap",
            });
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_parameters() {
        let c = EngineConfig::default();
        assert_eq!((c.theta, c.context_limit, c.vertex_limit, c.query_num), (3, 100, 600, 40));
        assert!(!c.reformulate);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let c = EngineConfig::from_toml_str(
            "theta = 2\nsystem_mode = \"single_turn\"\n[llm]\nkind = \"scripted\"\nscript = \"rules.json\"\n",
        )
        .unwrap();
        assert_eq!(c.theta, 2);
        assert_eq!(c.system_mode, SystemMode::SingleTurn);
        assert_eq!(c.llm.kind, BackendKind::Scripted);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(EngineConfig::from_toml_str(&text).unwrap(), c);

        assert!(matches!(
            EngineConfig::from_toml_str("theta = 0"),
            Err(ConfigError::NotPositive { field: "theta" })
        ));
        assert!(EngineConfig::from_toml_str("bogus = 1").is_err());
    }
}
