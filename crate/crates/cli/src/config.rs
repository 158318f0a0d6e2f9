//! Run configuration: a TOML file, overridden field by field by flags.

use std::fs;
use std::path::{Path, PathBuf};

use pearl_core::registry::Preset;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base URL of an OpenAI-compatible server. Mutually exclusive with
    /// `replay_path`.
    pub endpoint: Option<String>,
    pub model: String,
    /// Response cache for live calls.
    pub cache_dir: PathBuf,
    /// Transcript served by the replay backend instead of a live server.
    pub replay_path: Option<PathBuf>,
    pub rpm_limit: u32,
    /// Correction rounds after the first plan attempt.
    pub retry_limit: u32,
    pub concat_separator: String,
    pub demo_cap: usize,
    pub registry_path: PathBuf,
    pub demos_path: PathBuf,
    /// Seed for sampled significance tests.
    pub seed: u64,
    pub parallelism: usize,
    /// `full` (the registry file) or `minimal` (EXECUTE and CONCAT only).
    pub preset: String,
    pub context_window: usize,
    /// Add a reasoning-type labeling call per question.
    pub label_types: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            endpoint: None,
            model: "gpt-4".to_string(),
            cache_dir: PathBuf::from("cache"),
            replay_path: None,
            rpm_limit: 60,
            retry_limit: 3,
            concat_separator: " ".to_string(),
            demo_cap: 11,
            registry_path: PathBuf::from("registry.json"),
            demos_path: PathBuf::from("demos.jsonl"),
            seed: 0,
            parallelism: 1,
            preset: "full".to_string(),
            context_window: 8192,
            label_types: false,
        }
    }
}

/// Values given on the command line. `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub replay_path: Option<PathBuf>,
    pub rpm_limit: Option<u32>,
    pub retry_limit: Option<u32>,
    pub concat_separator: Option<String>,
    pub demo_cap: Option<usize>,
    pub registry_path: Option<PathBuf>,
    pub demos_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub preset: Option<String>,
    pub label_types: bool,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.cache_dir);
        rebase(&mut cfg.registry_path);
        rebase(&mut cfg.demos_path);
        if let Some(p) = cfg.replay_path.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        // A backend chosen on the command line replaces the file's choice.
        match (o.endpoint, o.replay_path) {
            (None, None) => {}
            (endpoint, replay_path) => {
                self.endpoint = endpoint;
                self.replay_path = replay_path;
            }
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field { self.$field = v; })*
            };
        }
        set!(model, cache_dir, rpm_limit, retry_limit, concat_separator, demo_cap, registry_path, demos_path, seed, parallelism, preset);
        self.label_types |= o.label_types;
    }

    /// Checks every field and reports all problems together.
    pub fn validate(&self, needs_backend: bool) -> Result<(), CliError> {
        let mut errors = Vec::new();
        if self.parallelism < 1 {
            errors.push("parallelism must be at least 1".to_string());
        }
        if self.rpm_limit < 1 {
            errors.push("rpm_limit must be at least 1".to_string());
        }
        if self.model.trim().is_empty() {
            errors.push("model must not be empty".to_string());
        }
        if self.context_window == 0 {
            errors.push("context_window must be positive".to_string());
        }
        if let Err(e) = self.preset.parse::<Preset>() {
            errors.push(e.to_string());
        }
        if needs_backend {
            match (&self.endpoint, &self.replay_path) {
                (None, None) => errors.push("set exactly one of endpoint or replay_path (neither is set)".to_string()),
                (Some(_), Some(_)) => errors.push("set exactly one of endpoint or replay_path (both are set)".to_string()),
                (Some(e), None) if e.trim().is_empty() => errors.push("endpoint must not be empty".to_string()),
                _ => {}
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors))
        }
    }
}
