//! Run configuration: TOML file mapped onto the engine's knobs.
//! Credentials never live in the file; the remote backend reads them
//! from `CTX2SKILL_API_KEY` / `CTX2SKILL_API_BASE`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::agents::RoleBindings;
use crate::model::{Decoding, Role};
use crate::provider::{Gateway, RemoteBackend, RetryPolicy, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_iterations")]
    iterations: u32,
    #[serde(default = "default_batch_size")]
    batch_size: u32,
    #[serde(default)]
    retry_limit: u32,
    #[serde(default = "default_parallelism")]
    parallelism_cap: u32,
    workspace: PathBuf,
    provider: ProviderKind,
    /// Scripted transcript table (JSON), resolved relative to the config file.
    #[serde(default)]
    transcript: Option<PathBuf>,
    /// Per-run prompt template overrides, resolved relative to the config file.
    #[serde(default)]
    templates_dir: Option<PathBuf>,
    #[serde(default)]
    default_model: Option<String>,
    #[serde(default)]
    models: BTreeMap<String, String>,
    #[serde(default)]
    decoding: BTreeMap<String, RawDecoding>,
    /// Abort a context run on challenger generation errors instead of
    /// recording an empty iteration.
    #[serde(default)]
    abort_on_generation_error: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct RawDecoding {
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    max_output: Option<u32>,
}

fn default_iterations() -> u32 {
    5
}
fn default_batch_size() -> u32 {
    5
}
fn default_parallelism() -> u32 {
    1
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub iterations: u32,
    pub batch_size: u32,
    pub retry_limit: u32,
    pub parallelism_cap: u32,
    pub workspace: PathBuf,
    pub provider: ProviderKind,
    pub transcript: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub role_models: BTreeMap<Role, String>,
    pub decoding: BTreeMap<Role, Decoding>,
    pub abort_on_generation_error: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn parse_role(name: &str) -> Option<Role> {
    Some(match name {
        "challenger" => Role::Challenger,
        "reasoner" => Role::Reasoner,
        "judge" => Role::Judge,
        "proposer" => Role::Proposer,
        "generator" => Role::Generator,
        "quality_evaluator" => Role::QualityEvaluator,
        _ => return None,
    })
}

const ALL_ROLES: [Role; 6] = [
    Role::Challenger,
    Role::Reasoner,
    Role::Judge,
    Role::Proposer,
    Role::Generator,
    Role::QualityEvaluator,
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw_text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let raw: RawConfig = toml::from_str(&raw_text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        if raw.iterations < 1 {
            return Err(invalid("iterations must be >= 1".into()));
        }
        if raw.batch_size < 1 {
            return Err(invalid("batch_size must be >= 1".into()));
        }
        if raw.parallelism_cap < 1 {
            return Err(invalid("parallelism_cap must be >= 1".into()));
        }
        if raw.provider == ProviderKind::Scripted && raw.transcript.is_none() {
            return Err(invalid("scripted provider requires `transcript`".into()));
        }

        let mut role_models = BTreeMap::new();
        for role in ALL_ROLES {
            if let Some(model) = raw
                .models
                .get(role.label())
                .cloned()
                .or_else(|| raw.default_model.clone())
            {
                role_models.insert(role, model);
            }
        }
        if role_models.len() < ALL_ROLES.len() {
            return Err(invalid(
                "every role needs a model: set `default_model` or a full [models] table".into(),
            ));
        }
        for key in raw.models.keys() {
            if parse_role(key).is_none() {
                return Err(invalid(format!("unknown role in [models]: {key:?}")));
            }
        }

        let mut decoding = BTreeMap::new();
        for (key, d) in &raw.decoding {
            let role = parse_role(key)
                .ok_or_else(|| invalid(format!("unknown role in [decoding]: {key:?}")))?;
            let mut base = Decoding::default();
            if role == Role::Judge {
                base.temperature = 0.0;
            }
            if let Some(t) = d.temperature {
                base.temperature = t;
            }
            if let Some(m) = d.max_output {
                base.max_output = m;
            }
            decoding.insert(role, base);
        }

        let base_dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        };

        Ok(RunConfig {
            iterations: raw.iterations,
            batch_size: raw.batch_size,
            retry_limit: raw.retry_limit,
            parallelism_cap: raw.parallelism_cap,
            workspace: resolve(&raw.workspace),
            provider: raw.provider,
            transcript: raw.transcript.as_ref().map(resolve),
            templates_dir: raw.templates_dir.as_ref().map(resolve),
            role_models,
            decoding,
            abort_on_generation_error: raw.abort_on_generation_error,
        })
    }

    /// Traces get logical timestamps under the scripted provider so runs
    /// are byte-reproducible.
    pub fn deterministic(&self) -> bool {
        self.provider == ProviderKind::Scripted
    }

    pub fn bindings(&self) -> RoleBindings {
        RoleBindings {
            models: self.role_models.clone(),
            decoding: self.decoding.clone(),
        }
    }

    pub fn build_gateway(&self) -> Result<Gateway, anyhow::Error> {
        let mut gateway = Gateway::with_parallelism_cap(self.parallelism_cap as usize);
        match self.provider {
            ProviderKind::Scripted => {
                let path = self.transcript.as_ref().expect("validated at load");
                gateway.set_default_backend(Box::new(ScriptedBackend::from_file(path)?));
            }
            ProviderKind::Remote => {
                let policy = RetryPolicy {
                    retry_limit: self.retry_limit,
                    base_delay: Duration::from_secs(1),
                    max_delay: Duration::from_secs(30),
                };
                gateway.set_default_backend(Box::new(RemoteBackend::from_env(policy)?));
            }
        }
        Ok(gateway)
    }
}
