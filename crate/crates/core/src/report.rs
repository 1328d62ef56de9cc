//! Canonical JSON reports with embedded run manifests.
//!
//! Canonical form: keys sorted, floats rounded to 6 significant digits and
//! printed in shortest round-trip form, NaN/inf rejected. Byte-identical
//! output for identical payloads is the contract golden-file tests rely on.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Provenance block embedded into every emitted report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub input_paths: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    /// Timestamp honors SOURCE_DATE_EPOCH (seconds) when set, so seeded
    /// commands can be replayed byte-for-byte.
    pub fn new(command: &str, argv: &[String], input_paths: Vec<String>, seed: Option<u64>) -> Self {
        let mut hasher = Sha256::new();
        for arg in argv {
            hasher.update(arg.as_bytes());
            hasher.update([0u8]);
        }
        let timestamp = match std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.parse::<i64>().ok())
            .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        {
            Some(t) => t,
            None => chrono::Utc::now(),
        };
        RunManifest {
            command: command.to_string(),
            config_digest: format!("{:x}", hasher.finalize()),
            input_paths,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        }
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

fn escape_json_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_canonical(value: &Value, out: &mut String) -> Result<()> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n
                    .as_f64()
                    .ok_or_else(|| Error::Serialize("non-finite number in report".into()))?;
                if !f.is_finite() {
                    return Err(Error::Serialize("NaN/inf forbidden in reports".into()));
                }
                let rounded = round_sig(f, 6);
                if rounded == rounded.trunc() && rounded.abs() < 1e15 {
                    out.push_str(&format!("{:.1}", rounded));
                } else {
                    out.push_str(&format!("{rounded}"));
                }
            }
        }
        Value::String(s) => escape_json_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap: keys already sorted
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                escape_json_string(key, out);
                out.push(':');
                write_canonical(item, out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// Serializes a payload to canonical JSON text (trailing newline included).
pub fn canonical_json(payload: &Value) -> Result<String> {
    let mut out = String::new();
    write_canonical(payload, &mut out)?;
    out.push('\n');
    Ok(out)
}

/// Wraps a payload with its manifest and writes it canonically.
pub fn emit_report(payload: Value, manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut document = serde_json::Map::new();
    document.insert(
        "manifest".to_string(),
        serde_json::to_value(manifest).map_err(|e| Error::Serialize(e.to_string()))?,
    );
    if let Value::Object(map) = payload {
        for (k, v) in map {
            document.insert(k, v);
        }
    } else if !payload.is_null() {
        document.insert("payload".to_string(), payload);
    }
    let text = canonical_json(&Value::Object(document))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn reject_nulls(value: &Value, path: &str) -> Result<()> {
    match value {
        Value::Null => Err(Error::Serialize(format!(
            "null at '{path}' (NaN and absent values are forbidden in reports)"
        ))),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                reject_nulls(item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        Value::Object(map) => {
            for (k, v) in map {
                reject_nulls(v, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Converts any serializable value into a report payload. serde_json turns
/// NaN into null, so nulls are rejected outright; optional report fields
/// must be skipped when absent rather than emitted as null.
pub fn to_payload<T: Serialize>(value: &T) -> Result<Value> {
    let v = serde_json::to_value(value).map_err(|e| Error::Serialize(e.to_string()))?;
    reject_nulls(&v, "$")?;
    Ok(v)
}
