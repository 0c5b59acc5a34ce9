//! Experiment configuration: built-in defaults, then the TOML file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use spatial_precision::experiment::{ExperimentConfig, ExperimentKind};
use toml::{Table, Value};

/// Tables whose `kind` selects a variant; a new kind replaces the whole table.
const TAGGED: [&str; 2] = ["model", "law"];

fn kind_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Precision => "precision",
        ExperimentKind::GraphRoc => "graph_roc",
        ExperimentKind::Lda => "lda",
    }
}

pub fn default_table(kind: ExperimentKind) -> Table {
    match Value::try_from(ExperimentConfig::defaults(kind)).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("a struct serializes to a table"),
    }
}

/// Recursively overlays `over` onto `base`.
pub fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => {
                let new_kind = o.get("kind").is_some_and(|k| b.get("kind") != Some(k));
                if TAGGED.contains(&key.as_str()) && new_kind {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Sets the dotted `key` to `value`, creating intermediate tables.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut over = Table::new();
    over.insert(last.to_string(), value);
    while let Some(part) = parts.pop() {
        let mut outer = Table::new();
        outer.insert(part.to_string(), Value::Table(over));
        over = outer;
    }
    if key.split('.').any(str::is_empty) {
        bail!("malformed key {key:?}");
    }
    merge(table, over);
    Ok(())
}

/// Parses a flag value as TOML, falling back to a bare string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn load_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("parsing {}", path.display()))
}

/// Resolves the configuration of a `kind` experiment from an optional file and overrides.
pub fn resolve(kind: ExperimentKind, file: Option<Table>, overrides: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut table = default_table(kind);
    if let Some(file) = file {
        if let Some(declared) = file.get("experiment") {
            if declared.as_str() != Some(kind_name(kind)) {
                bail!(
                    "config declares experiment = {declared}, but the subcommand runs {}",
                    kind_name(kind)
                );
            }
        }
        merge(&mut table, file);
    }
    for (key, value) in overrides {
        set_path(&mut table, key, value.clone())?;
    }
    let cfg: ExperimentConfig = Value::Table(table).try_into().context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}
