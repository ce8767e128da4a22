//! Merges an optional JSON config file into the command line.
//!
//! Top-level keys name flags (`"k": 5`, `"min-scaled-dim": 8`); an object
//! keyed by a subcommand name scopes its keys to that subcommand and wins
//! over top-level keys. Flags given on the command line always win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{CommandFactory, Parser};
use serde_json::Value;

use crate::{Cli, Failure};

const RESERVED: [&str; 3] = ["config", "help", "version"];

pub fn parse(argv: Vec<OsString>) -> Result<Cli, Failure> {
    let cmd = Cli::command();
    // first pass tolerates missing required flags: the config may supply them
    let lenient = cmd.clone().mut_subcommands(|s| s.mut_args(|a| a.required(false)));
    let matches = lenient.try_get_matches_from(&argv).unwrap_or_else(|e| e.exit());
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Ok(Cli::try_parse_from(&argv).unwrap_or_else(|e| e.exit()));
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let json: Value =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("config {}: {e}", path.display())))?;
    let obj = json.as_object().ok_or_else(|| Failure::data("config must be a JSON object"))?;

    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");
    let is_sub = |k: &str| cmd.get_subcommands().any(|s| s.get_name() == k);

    let mut settings: BTreeMap<String, &Value> = BTreeMap::new();
    for (k, v) in obj {
        if !is_sub(k) {
            settings.insert(k.replace('-', "_"), v);
        }
    }
    if let Some(Value::Object(section)) = obj.get(sub_name) {
        for (k, v) in section {
            settings.insert(k.replace('-', "_"), v);
        }
    }

    let mut extra: Vec<OsString> = Vec::new();
    for (id, value) in settings {
        let arg = sub_cmd.get_arguments().chain(cmd.get_arguments()).find(|a| a.get_id().as_str() == id);
        let Some(arg) = arg.filter(|_| !RESERVED.contains(&id.as_str())) else {
            eprintln!("warning: config key '{id}' is not a flag of '{sub_name}'; ignored");
            continue;
        };
        let explicit = sub_matches.try_contains_id(&id).unwrap_or(false)
            && sub_matches.value_source(&id) == Some(ValueSource::CommandLine);
        if explicit {
            continue;
        }
        let long = format!("--{}", arg.get_long().unwrap_or(&id));
        match value {
            Value::Bool(true) => extra.push(long.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Number(n) if id == "verbose" => {
                extra.extend(std::iter::repeat_n(OsString::from(&long), n.as_u64().unwrap_or(0) as usize));
            }
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar).collect::<Result<_, _>>()?;
                extra.push(format!("{long}={}", joined.join(",")).into());
            }
            v => extra.push(format!("{long}={}", scalar(v)?).into()),
        }
    }

    let mut merged = argv;
    merged.extend(extra);
    Ok(Cli::try_parse_from(merged).unwrap_or_else(|e| e.exit()))
}

fn scalar(v: &Value) -> Result<String, Failure> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(Failure::data(format!("config value {other} is not a scalar"))),
    }
}
