//! The run configuration document.
//!
//! One TOML file holds every setting of a run. Loading applies, in order:
//! the file, the `CRANE_RL_OUTPUT_DIR` environment variable (replaces
//! `output_dir`), then `--set key=value` overrides. Relative paths in the
//! file are resolved against the file's directory and stored absolute, so the
//! frozen copy written next to a run's outputs reproduces it from anywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crane::CraneConfig;
use crate::env::{scenario_by_name, EnvConfig, RewardParams, Scenario, CANONICAL_SCENARIOS};
use crate::ppo::PpoConfig;
use crate::task::Task;
use crate::toy::PointReachConfig;
use crate::{Error, Result};

pub const OUTPUT_DIR_ENV: &str = "CRANE_RL_OUTPUT_DIR";
pub const FROZEN_CONFIG_NAME: &str = "config.resolved.toml";
/// Scenario name selecting the point-mass reach task.
pub const POINT_REACH: &str = "point-reach";

/// Canonical scenario name, `point-reach`, a scenario file path, or an
/// inline scenario table (same keys as a scenario file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(toml::Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds network initialization, minibatch shuffling and episode resets.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scenario: ScenarioRef,
    pub crane: CraneConfig,
    pub reward: RewardParams,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            scenario: ScenarioRef::Named("loading-free".into()),
            crane: CraneConfig::default(),
            reward: RewardParams::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

/// 1-based line of `key` inside `[section]` (top level when `section` is empty).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set {item}: expected key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one item");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: {p} is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

fn absolutize(base: &Path, p: &str) -> String {
    let joined = base.join(p);
    joined
        .canonicalize()
        .unwrap_or(joined)
        .to_string_lossy()
        .into_owned()
}

impl RunConfig {
    /// Loads `path`, then applies the environment override and `overrides`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, overrides).map_err(|e| match e {
            Error::Config(m) if m.starts_with(':') => {
                Error::Config(format!("{}{m}", path.display()))
            }
            e => e,
        })
    }

    /// Parses a document whose relative paths are resolved against `base`.
    /// Errors located in `text` start with `:<line>: `.
    pub fn from_toml_str(text: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let at = |e: toml::de::Error| {
            let line = e.span().map_or(String::new(), |s| format!(":{}", line_of(text, s.start)));
            Error::Config(format!("{line}: {}", e.message()))
        };
        // Parse the file alone first so that type errors carry a line number.
        toml::from_str::<RunConfig>(text).map_err(at)?;
        let mut doc: toml::Table = toml::from_str(text).map_err(at)?;
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            doc.insert("output_dir".into(), toml::Value::String(dir));
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("--set: {}", e.message())))?;
        cfg.resolve_paths(base);
        if let Err((section, field, msg)) = cfg.check() {
            let set_key = format!("{section}.{field}");
            let overridden = overrides
                .iter()
                .any(|o| o.split_once('=').is_some_and(|(k, _)| k.trim() == set_key));
            return Err(Error::Config(match locate(text, section, field) {
                Some(line) if !overridden => format!(":{line}: {set_key}: {msg}"),
                _ if overridden => format!("--set {set_key}: {msg}"),
                _ => format!(": {set_key}: {msg}"),
            }));
        }
        cfg.scenario()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        match &mut self.scenario {
            ScenarioRef::Named(name) => {
                if scenario_by_name(name).is_none() && name != POINT_REACH {
                    *name = absolutize(base, name);
                }
            }
            ScenarioRef::Inline(table) => {
                if let Some(toml::Value::String(w)) = table.get_mut("world") {
                    *w = absolutize(base, w);
                }
            }
        }
    }

    fn check(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let tag = |section| move |(field, msg)| (section, field, msg);
        self.crane.check().map_err(tag("crane"))?;
        self.reward.check().map_err(tag("reward"))?;
        self.env.check().map_err(tag("env"))?;
        self.ppo_config().check().map_err(tag("ppo"))?;
        Ok(())
    }

    /// PPO settings with the run seed filled in.
    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            seed: self.seed,
            ..self.ppo.clone()
        }
    }

    /// The crane scenario, or `None` for the point-mass task.
    pub fn scenario(&self) -> Result<Option<Scenario>> {
        let sc = match &self.scenario {
            ScenarioRef::Named(name) if name == POINT_REACH => return Ok(None),
            ScenarioRef::Named(name) => match scenario_by_name(name) {
                Some(sc) => sc,
                None => {
                    let path = Path::new(name);
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "scenario {name}: no such file and not one of {}, {POINT_REACH}",
                            CANONICAL_SCENARIOS.join(", ")
                        )));
                    }
                    Scenario::load(path)?
                }
            },
            ScenarioRef::Inline(table) => {
                let text = toml::to_string(table).map_err(|e| Error::Config(e.to_string()))?;
                Scenario::from_toml_str(&text, Path::new("."))
                    .map_err(|e| Error::Config(format!("inline scenario: {e}")))?
            }
        };
        sc.validate(&self.crane)?;
        Ok(Some(sc))
    }

    pub fn task(&self) -> Result<Task> {
        Ok(match self.scenario()? {
            Some(scenario) => Task::Crane {
                crane: self.crane.clone(),
                reward: self.reward.clone(),
                env: self.env.clone(),
                scenario,
            },
            None => Task::PointReach(PointReachConfig {
                action_bound: self.env.action_bound,
                reward: self.reward.clone(),
                ..PointReachConfig::default()
            }),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
