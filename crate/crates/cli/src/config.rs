//! Flat `key=value` config files, merged into the argument list.
//!
//! Keys are long flag names without the leading dashes (`budget = 10`,
//! `l2-normalize = true`; `_` and `-` are interchangeable). An entry is
//! dropped when the same flag already appears on the command line, so flags
//! always win. Boolean flags accept `true` / `false`.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::CliError;

/// Global options that consume the following token as their value.
const GLOBAL_VALUE_FLAGS: [&str; 4] = ["--seed", "--threads", "--out-dir", "--config"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(entries)
}

fn token_str(t: &OsString) -> &str {
    t.to_str().unwrap_or("")
}

/// Location of the subcommand token and the `--config` path, if any.
fn scan(argv: &[OsString]) -> (Option<usize>, Option<String>) {
    let subcommands: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    let mut sub = None;
    let mut config = None;
    let mut i = 1;
    while i < argv.len() {
        let tok = token_str(&argv[i]);
        if tok == "--config" {
            config = argv.get(i + 1).map(|v| token_str(v).to_string());
            i += 2;
            continue;
        }
        if let Some(v) = tok.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if GLOBAL_VALUE_FLAGS.contains(&tok) {
            i += 2;
            continue;
        } else if sub.is_none() && subcommands.iter().any(|s| s == tok) {
            sub = Some(i);
        }
        i += 1;
    }
    (sub, config)
}

fn flag_present(argv: &[OsString], flag: &str) -> bool {
    let with_value = format!("{flag}=");
    argv.iter()
        .map(token_str)
        .any(|t| t == flag || t.starts_with(&with_value))
}

/// Inserts config entries right after the subcommand token. Without a
/// `--config` flag the arguments are returned unchanged.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let (sub, config) = scan(&argv);
    let Some(path) = config else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let entries = parse(&text)?;
    let Some(sub) = sub else {
        // no subcommand: let the parser report it
        return Ok(argv);
    };

    let root = Cli::command();
    let command = root
        .find_subcommand(token_str(&argv[sub]))
        .expect("scan only returns known subcommands");
    let mut extra: Vec<OsString> = Vec::new();
    for entry in entries {
        if entry.key == "config" {
            return Err(CliError::Usage(format!("config line {}: nested config files are not supported", entry.line)));
        }
        let arg = command
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(entry.key.as_str()))
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: `{}` is not an option of `{}`",
                    entry.line,
                    entry.key,
                    command.get_name()
                ))
            })?;
        let flag = format!("--{}", entry.key);
        if flag_present(&argv, &flag) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match entry.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => extra.push(flag.into()),
                "false" | "no" | "0" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "config line {}: `{}` expects true or false, got {other:?}",
                        entry.line, entry.key
                    )))
                }
            }
        } else {
            extra.push(format!("{flag}={}", entry.value).into());
        }
    }
    let mut out = argv;
    let tail = out.split_off(sub + 1);
    out.extend(extra);
    out.extend(tail);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn parse_skips_comments_and_normalizes_keys() {
        let e = parse("# x\n\nper_class = 3\n--budget=10\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str()), ("per-class", "3"));
        assert_eq!((e[1].key.as_str(), e[1].value.as_str()), ("budget", "10"));
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn config_entries_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "budget = 7\nl2_normalize = true\nseed = 4\nmax-iter = 9\n").unwrap();
        let argv = os(&[
            "lbal",
            "--config",
            cfg.to_str().unwrap(),
            "select",
            "--max-iter",
            "3",
        ]);
        let out = expand(argv).unwrap();
        let toks: Vec<&str> = out.iter().map(|t| t.to_str().unwrap()).collect();
        assert!(toks.contains(&"--budget=7"));
        assert!(toks.contains(&"--l2-normalize"));
        assert!(toks.contains(&"--seed=4"));
        assert!(!toks.contains(&"--max-iter=9"));
        assert_eq!(toks[3], "select");
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "bogus = 1\n").unwrap();
        let argv = os(&["lbal", "select", "--config", cfg.to_str().unwrap()]);
        assert!(matches!(expand(argv), Err(CliError::Usage(_))));
    }
}
