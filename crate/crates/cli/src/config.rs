//! `key = value` configuration files merged into the argument list.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::Failure;

/// One `key = value` entry with its line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Blank lines and lines starting with `#` are ignored. Keys may use `_`
/// or `-` and an optional leading `--`; values may be quoted.
pub fn parse(text: &str, origin: &str) -> Result<Vec<Entry>, Failure> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::usage(format!(
                "{origin}: line {}: expected `key = value`",
                idx + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Failure::usage(format!("{origin}: line {}: empty key", idx + 1)));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.push(Entry {
            line: idx + 1,
            key,
            value: value.to_string(),
        });
    }
    Ok(out)
}

/// The `--config` value and the subcommand name found in `argv`.
fn scan(argv: &[OsString], root: &Command) -> (Option<OsString>, Option<String>) {
    let mut config = None;
    let mut sub = None;
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            config = it.next().cloned();
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(OsString::from(v));
        } else if s == "--" {
            break;
        } else if sub.is_none() && root.find_subcommand(s.as_ref()).is_some() {
            sub = Some(s.into_owned());
        }
    }
    (config, sub)
}

fn given(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag.as_str() || s.starts_with(&prefix)
    })
}

/// Longs of every option anywhere in the command tree.
fn all_longs(cmd: &Command, into: &mut BTreeSet<String>) {
    for a in cmd.get_arguments() {
        if let Some(l) = a.get_long() {
            into.insert(l.to_string());
        }
    }
    for s in cmd.get_subcommands() {
        all_longs(s, into);
    }
}

/// Append config entries to `argv` as `--key=value`, skipping keys already
/// given on the command line and keys the subcommand does not take. A key
/// no subcommand knows is an error.
pub fn merge(argv: Vec<OsString>, root: &Command) -> Result<Vec<OsString>, Failure> {
    let (config, sub) = scan(&argv, root);
    let Some(config) = config else {
        return Ok(argv);
    };
    let path = Path::new(&config);
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {origin}: {e}")))?;
    let entries = parse(&text, &origin)?;

    let mut known = BTreeSet::new();
    all_longs(root, &mut known);
    let target = sub.as_deref().and_then(|s| root.find_subcommand(s));

    let mut out = argv.clone();
    for e in entries {
        if !known.contains(&e.key) {
            return Err(Failure::usage(format!(
                "{origin}: line {}: unknown key `{}`",
                e.line, e.key
            )));
        }
        if e.key == "config" || given(&argv, &e.key) {
            continue;
        }
        let arg = target
            .into_iter()
            .flat_map(|c| c.get_arguments())
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(e.key.as_str()));
        let Some(arg) = arg else { continue };
        match arg.get_action() {
            ArgAction::SetTrue => match e.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => out.push(format!("--{}", e.key).into()),
                "false" | "no" | "0" => {}
                other => {
                    return Err(Failure::usage(format!(
                        "{origin}: line {}: `{}` expects true or false, got {other:?}",
                        e.line, e.key
                    )))
                }
            },
            _ => out.push(format!("--{}={}", e.key, e.value).into()),
        }
    }
    Ok(out)
}
