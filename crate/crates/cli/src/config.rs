use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, ValueHint};
use serde_json::Value;

use crate::args::Cli;

/// Appends flags taken from the `--config` file to `argv`.
///
/// The config is a JSON object keyed by flag name (`half_width` or
/// `half-width`). Keys under an object named after the subcommand override the
/// top-level ones; sections for other subcommands are ignored. A key whose flag
/// was given on the command line is skipped, so flags win. Relative paths are
/// resolved against the config file's directory.
pub fn merge(argv: Vec<OsString>, matches: &ArgMatches) -> anyhow::Result<Vec<OsString>> {
    let Some((name, sub)) = matches.subcommand() else {
        return Ok(argv);
    };
    let Some(path) = sub.get_one::<PathBuf>("config") else {
        return Ok(argv);
    };
    let entries = load(path, name)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut cmd = Cli::command();
    cmd.build();
    let sub_cmd = cmd
        .find_subcommand(name)
        .ok_or_else(|| anyhow!("unknown subcommand {name}"))?;

    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let id = key.replace('-', "_");
        if id == "config" {
            bail!("field `config`: a config file cannot name another config file");
        }
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_id().as_str() == id)
            .ok_or_else(|| anyhow!("field `{key}`: not an option of `{name}`"))?;
        if sub.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let long = arg
            .get_long()
            .ok_or_else(|| anyhow!("field `{key}`: has no long flag"))?;
        let flag = OsString::from(format!("--{long}"));
        let is_path = matches!(
            arg.get_value_hint(),
            ValueHint::FilePath | ValueHint::DirPath | ValueHint::AnyPath
        );
        let render = |v: &Value| -> anyhow::Result<OsString> {
            let s = scalar(v).with_context(|| format!("field `{key}`"))?;
            Ok(if is_path && Path::new(&s).is_relative() {
                base.join(s).into_os_string()
            } else {
                s.into()
            })
        };
        match &value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(flag),
            Value::Array(items) => {
                if items.is_empty() {
                    continue;
                }
                extra.push(flag);
                for v in items {
                    extra.push(render(v)?);
                }
            }
            v => {
                extra.push(flag);
                extra.push(render(v)?);
            }
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

fn load(path: &Path, subcommand: &str) -> anyhow::Result<BTreeMap<String, Value>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("field `config`: cannot read {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("field `config`: malformed JSON in {}", path.display()))?;
    let Value::Object(obj) = value else {
        bail!("field `config`: {} must hold a JSON object", path.display());
    };
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let mut entries = BTreeMap::new();
    let mut section = BTreeMap::new();
    for (k, v) in obj {
        if names.contains(&k) {
            let Value::Object(inner) = v else {
                bail!("field `{k}`: subcommand section must be an object");
            };
            if k == subcommand {
                section.extend(inner);
            }
        } else {
            entries.insert(k, v);
        }
    }
    entries.extend(section);
    Ok(entries)
}

fn scalar(v: &Value) -> anyhow::Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(anyhow!("expected a string, number or boolean, got {v}")),
    }
}
