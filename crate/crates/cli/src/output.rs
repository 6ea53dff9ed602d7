use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use sos_core::exact::{BRUTE_STATE_LIMIT, FKG_PAIR_LIMIT, TRANSFER_STATE_LIMIT};
use sos_core::{Error, Result};

/// Effective configuration as ordered `key=value` pairs, `command` first.
pub fn config_pairs(command: &str, args: &impl Serialize) -> Result<Vec<(String, String)>> {
    let mut out = vec![("command".to_string(), command.to_string())];
    let Value::Object(map) = serde_json::to_value(args)? else {
        return Err(Error::Parse("arguments did not serialize to an object".into()));
    };
    for (k, v) in map {
        let s = match v {
            Value::Null => continue,
            Value::String(s) => s,
            Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        out.push((k, s));
    }
    Ok(out)
}

pub fn guard_limits() -> Value {
    json!({
        "brute_states": BRUTE_STATE_LIMIT,
        "transfer_states": TRANSFER_STATE_LIMIT,
        "fkg_pairs": FKG_PAIR_LIMIT,
    })
}

pub fn csv(config: &[(String, String)], body: &str) -> String {
    let mut out = String::new();
    for (k, v) in config {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(body);
    out
}

pub fn text(config: &[(String, String)], lines: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in config {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for (k, v) in lines {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out
}

pub fn json(config: &[(String, String)], result: Value) -> Result<String> {
    let cfg: serde_json::Map<String, Value> = config.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    let doc = json!({ "config": cfg, "guard_limits": guard_limits(), "result": result });
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// Write to `path` via a sibling temporary file and rename, or to stdout.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
        }
        Some(p) => {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let tmp = p.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
            fs::write(&tmp, content)?;
            fs::rename(&tmp, p)?;
        }
    }
    Ok(())
}
