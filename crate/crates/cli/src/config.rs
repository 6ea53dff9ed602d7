//! Flat `key=value` config files.
//!
//! A config file is a list of `key=value` lines; `#` prefixes are stripped, so
//! the header of any CSV this tool writes is itself a valid config. A JSON
//! output is read through its `config` object. Keys are long flag names.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;

use sos_core::{Error, Result};

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::Parse("JSON config needs a top-level \"config\" object".into()))?;
        return Ok(obj
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect());
    }
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim_start_matches('#').trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            // the body of a CSV or a comment
            continue;
        };
        let k = k.trim();
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            continue;
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Splice `--key value` pairs from any `--config FILE` ahead of the explicit
/// flags, so that flags given on the command line win.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    if strs.len() < 2 {
        return Ok(args);
    }
    let text = fs::read_to_string(&path)?;
    let map = parse_config(&text)?;
    let sub = &strs[1];
    let mut injected: Vec<OsString> = Vec::new();
    for (k, v) in map {
        match k.as_str() {
            "command" => {
                if &v != sub {
                    return Err(Error::Parse(format!("config {path} is for '{v}', not '{sub}'")));
                }
            }
            "config" | "out" => {}
            _ => match v.as_str() {
                "true" => injected.push(format!("--{k}").into()),
                "false" => {}
                _ => {
                    injected.push(format!("--{k}").into());
                    injected.push(v.into());
                }
            },
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend(args[..2].iter().cloned());
    out.extend(injected);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lines_parse() {
        let m = parse_config("# command=tau0\n# beta=2\n# L=3\nL,beta\n3,2\n").unwrap();
        assert_eq!(m.get("beta").unwrap(), "2");
        assert_eq!(m.get("L").unwrap(), "3");
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn json_config_parses() {
        let m = parse_config(r#"{"config": {"beta": 1.5, "bc": "zero"}, "result": {}}"#).unwrap();
        assert_eq!(m.get("beta").unwrap(), "1.5");
        assert_eq!(m.get("bc").unwrap(), "zero");
    }

    #[test]
    fn flags_follow_config() {
        let dir = std::env::temp_dir().join(format!("sos-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("c.cfg");
        fs::write(&p, "beta=3\nlevel-lines=true\n").unwrap();
        let args: Vec<OsString> =
            ["sos", "sample", "--config", p.to_str().unwrap(), "--beta", "2"].iter().map(OsString::from).collect();
        let out = expand_args(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[2..5], ["--beta", "3", "--level-lines"]);
        assert_eq!(s.last().unwrap(), "2");
    }
}
