//! `key = value` config files. Values are spliced into the argument list
//! right after the subcommand, ahead of the user's own flags, so flags given
//! on the command line win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`, got {raw:?}", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    parse(&text).with_context(|| format!("in config file {}", path.display()))
}

/// Position of `--config`'s value in `args`, if given.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Returns `args` with config-file values inserted after the subcommand.
pub fn splice(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let map = load(Path::new(&path))?;
    let Some((pos, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).map(|s| (i, s)))
    else {
        return Ok(args);
    };
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in &map {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            log::warn!("config key {key:?} is not used by `{}`", sub.get_name());
            continue;
        };
        if key == "config" {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                _ => bail!("config key {key}: expected true or false, got {value:?}"),
            },
            _ => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend(args[pos + 1..].iter().cloned());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let m = parse("# header\nnoise_sigma = 2.5\n\n  traces=10 # inline\n").unwrap();
        assert_eq!(m["noise-sigma"], "2.5");
        assert_eq!(m["traces"], "10");
        assert!(parse("just words").is_err());
    }
}
