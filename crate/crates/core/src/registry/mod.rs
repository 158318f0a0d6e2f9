//! Action vocabulary: definitions, persistence, presets, and the mining and
//! reduction stages that build it.

mod mining;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use mining::{
    mine_actions, parse_action_list, parse_mined_actions, reduce_actions, MiningLogEntry,
    MiningOutcome, MiningQuestion, ReductionSettings, REDUCTION_CHUNK_SIZE,
};

/// Name of the locally executed concatenation builtin.
pub const CONCAT: &str = "CONCAT";

const SEED_ACTIONS_JSON: &str = include_str!("../../data/seed_actions.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Seed,
    Mined,
    Reduced,
    PlanDeclared,
}

/// A named action with its parameter list and a one-sentence definition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionDef {
    pub name: String,
    /// Parameter names; a trailing `...` makes the action variadic.
    pub params: Vec<String>,
    pub definition: String,
    pub origin: Origin,
}

impl ActionDef {
    pub fn new(name: &str, params: &[&str], definition: &str, origin: Origin) -> Self {
        ActionDef {
            name: name.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
            definition: definition.to_string(),
            origin,
        }
    }

    pub fn is_variadic(&self) -> bool {
        self.name == CONCAT || self.params.last().is_some_and(|p| p == "...")
    }

    /// Variadic actions take one or more arguments; all others take exactly
    /// one per declared parameter.
    pub fn accepts_arity(&self, n: usize) -> bool {
        if self.is_variadic() {
            n >= 1
        } else {
            n == self.params.len()
        }
    }

    pub(crate) fn arity_description(&self) -> String {
        if self.is_variadic() {
            "at least 1 argument".to_string()
        } else if self.params.len() == 1 {
            "1 argument".to_string()
        } else {
            format!("{} arguments", self.params.len())
        }
    }

    /// Parameter name bound to the argument at `position`.
    pub fn param_name(&self, position: usize) -> String {
        let fixed: Vec<&String> = self.params.iter().filter(|p| *p != "...").collect();
        match fixed.get(position) {
            Some(p) => (*p).clone(),
            None => format!("ARG{}", position + 1),
        }
    }
}

/// The `CONCAT` builtin.
pub fn concat_action() -> &'static ActionDef {
    static DEF: OnceLock<ActionDef> = OnceLock::new();
    DEF.get_or_init(|| {
        ActionDef::new(
            CONCAT,
            &["S1", "S2", "..."],
            "Concatenate the input S1, S2, ...",
            Origin::Seed,
        )
    })
}

pub(crate) fn builtin(name: &str) -> Option<&'static ActionDef> {
    (name == CONCAT).then(concat_action)
}

pub fn is_builtin(name: &str) -> bool {
    name == CONCAT
}

/// The seven hand-written seed actions used to prompt mining.
pub fn seed_actions() -> Vec<ActionDef> {
    serde_json::from_str(SEED_ACTIONS_JSON).expect("bundled seed actions are valid JSON")
}

/// Where a registry came from. Stored next to the registry file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    /// Reduction rounds applied so far.
    #[serde(default)]
    pub rounds: u32,
    /// Number of questions mining was run over.
    #[serde(default)]
    pub mined_questions: usize,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate action name '{0}'")]
    DuplicateAction(String),
    #[error("unknown preset '{0}' (expected 'full' or 'minimal')")]
    UnknownPreset(String),
    #[error("mining needs at least one seed action")]
    NoSeeds,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// An ordered set of uniquely named actions. `CONCAT` is always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRegistry {
    actions: Vec<ActionDef>,
    pub provenance: Provenance,
}

impl ActionRegistry {
    /// Builds a registry, rejecting duplicate names and inserting `CONCAT`
    /// at the front when it is missing.
    pub fn new(actions: Vec<ActionDef>) -> Result<Self, RegistryError> {
        let mut seen = std::collections::HashSet::new();
        for a in &actions {
            if !seen.insert(a.name.as_str()) {
                return Err(RegistryError::DuplicateAction(a.name.clone()));
            }
        }
        let mut registry = ActionRegistry {
            actions,
            provenance: Provenance::default(),
        };
        registry.ensure_builtins();
        Ok(registry)
    }

    /// Like [`ActionRegistry::new`] but keeps the first definition of each
    /// name. Returns the registry and the names that were dropped.
    pub fn dedup_first(actions: impl IntoIterator<Item = ActionDef>) -> (Self, Vec<String>) {
        let mut kept: Vec<ActionDef> = Vec::new();
        let mut dropped = Vec::new();
        for a in actions {
            if kept.iter().any(|k| k.name == a.name) {
                dropped.push(a.name);
            } else {
                kept.push(a);
            }
        }
        let mut registry = ActionRegistry {
            actions: kept,
            provenance: Provenance::default(),
        };
        registry.ensure_builtins();
        (registry, dropped)
    }

    fn ensure_builtins(&mut self) {
        if !self.actions.iter().any(|a| a.name == CONCAT) {
            self.actions.insert(0, concat_action().clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&ActionDef> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(|a| a.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Appends `def` unless the name is taken. Returns whether it was added.
    pub fn insert_if_absent(&mut self, def: ActionDef) -> bool {
        if self.contains(&def.name) {
            false
        } else {
            self.actions.push(def);
            true
        }
    }

    /// Writes the registry as a JSON array plus a `.provenance.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        let io_err = |source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let body = serde_json::to_string_pretty(&self.actions).expect("actions serialize");
        fs::write(path, body + "\n").map_err(io_err)?;
        let meta = serde_json::to_string_pretty(&self.provenance).expect("provenance serializes");
        fs::write(provenance_path(path), meta + "\n").map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut registry = Self::from_json(&text, &path.display().to_string())?;
        let meta_path = provenance_path(path);
        if meta_path.exists() {
            let meta = fs::read_to_string(&meta_path).map_err(|source| RegistryError::Io {
                path: meta_path.clone(),
                source,
            })?;
            registry.provenance =
                serde_json::from_str(&meta).map_err(|e| RegistryError::Schema {
                    path: meta_path.display().to_string(),
                    message: e.to_string(),
                })?;
        }
        Ok(registry)
    }

    /// Parses the registry file format: a JSON array of
    /// `{name, params, definition, origin}` objects.
    pub fn from_json(text: &str, origin_label: &str) -> Result<Self, RegistryError> {
        let schema = |message: String| RegistryError::Schema {
            path: origin_label.to_string(),
            message,
        };
        let actions: Vec<ActionDef> =
            serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        for a in &actions {
            if !crate::plan::is_action_ident(&a.name) {
                return Err(schema(format!("invalid action name '{}'", a.name)));
            }
            if a.definition.trim().is_empty() && !is_builtin(&a.name) {
                return Err(schema(format!("action '{}' has an empty definition", a.name)));
            }
        }
        Self::new(actions).map_err(|e| match e {
            RegistryError::DuplicateAction(name) => {
                schema(format!("duplicate action name '{name}'"))
            }
            other => other,
        })
    }
}

fn provenance_path(path: &Path) -> PathBuf {
    path.with_extension("provenance.json")
}

/// Named registry configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// The registry file produced by mining and reduction.
    Full,
    /// A single free-form `EXECUTE` action plus `CONCAT`.
    Minimal,
}

impl FromStr for Preset {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Preset::Full),
            "minimal" => Ok(Preset::Minimal),
            other => Err(RegistryError::UnknownPreset(other.to_string())),
        }
    }
}

/// Resolves a preset by name. `full` loads `registry_path`.
pub fn preset_registry(name: &str, registry_path: &Path) -> Result<ActionRegistry, RegistryError> {
    match name.parse::<Preset>()? {
        Preset::Full => ActionRegistry::load(registry_path),
        Preset::Minimal => Ok(minimal_registry()),
    }
}

pub fn minimal_registry() -> ActionRegistry {
    ActionRegistry::new(vec![
        ActionDef::new(
            "EXECUTE",
            &["CTX", "INSTRUCTION"],
            "Carry out the free-form natural language INSTRUCTION given the input CTX.",
            Origin::Seed,
        ),
        concat_action().clone(),
    ])
    .expect("minimal preset has unique names")
}
