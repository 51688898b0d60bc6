//! `--config <path>`: a flat JSON object keyed by flag name (`batch-size` or
//! `batch_size`). Its values become the defaults of the matching flags, so
//! explicit flags still win and `--help` shows the effective defaults.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::builder::Resettable;
use clap::Command;
use serde_json::Value;

use crate::UsageError;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn as_default(key: &str, v: &Value) -> anyhow::Result<Option<Vec<String>>> {
    Ok(Some(match v {
        Value::Null => return Ok(None),
        Value::Bool(b) => vec![b.to_string()],
        Value::Number(n) => vec![n.to_string()],
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                Value::Bool(b) => Ok(b.to_string()),
                _ => Err(UsageError(format!("config key {key}: arrays may hold only scalars"))),
            })
            .collect::<Result<_, _>>()?,
        Value::Object(_) => {
            return Err(UsageError(format!("config key {key}: nested objects are not supported")).into())
        }
    }))
}

fn has_arg(cmd: &Command, id: &str) -> bool {
    cmd.get_arguments().any(|a| a.get_id() == id)
}

fn set_default(cmd: Command, id: &str, values: &[String]) -> Command {
    let values = values.to_vec();
    cmd.mut_arg(id, move |a| {
        let a = a.required(false).env(Resettable::Reset);
        if values.len() == 1 {
            a.default_value(values[0].clone())
        } else {
            a.default_values(values)
        }
    })
}

pub fn apply_defaults(mut cmd: Command, argv: &[OsString]) -> anyhow::Result<Command> {
    let Some(path) = config_path(argv) else {
        return Ok(cmd);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(|e| UsageError(format!("{e:#}")))?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
    else {
        return Err(UsageError(format!("config {} must hold a JSON object", path.display())).into());
    };
    for (key, value) in &map {
        let id = key.replace('-', "_");
        if id == "config" {
            return Err(UsageError("config files cannot name another config".into()).into());
        }
        let Some(values) = as_default(key, value)? else {
            continue;
        };
        let mut known = false;
        if has_arg(&cmd, &id) {
            cmd = set_default(cmd, &id, &values);
            known = true;
        }
        let subs: Vec<String> = cmd
            .get_subcommands()
            .filter(|s| has_arg(s, &id))
            .map(|s| s.get_name().to_string())
            .collect();
        for name in subs {
            let (id, values) = (id.clone(), values.clone());
            cmd = cmd.mut_subcommand(name, move |s| set_default(s, &id, &values));
            known = true;
        }
        if !known {
            return Err(UsageError(format!("config key {key} matches no flag")).into());
        }
    }
    Ok(cmd)
}
