//! Line-delimited JSON in, atomic writes out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gvqa_core::SCHEMA;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Parses every non-blank line of `path`. Header records written by this
/// tool are skipped; a `"schema"` field, when present, must match.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::input(format!("{}:{lineno}: {msg}", path.display()));
        let mut value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            if obj.get("kind").and_then(Value::as_str) == Some("header") {
                continue;
            }
            match obj.remove("schema") {
                None => {}
                Some(Value::String(s)) if s == SCHEMA => {}
                Some(other) => return Err(bad(format!("unsupported schema {other}, expected {SCHEMA:?}"))),
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// `value` with `"schema"` prepended, as one JSON line.
pub fn record_line<T: Serialize>(value: &T) -> CliResult<String> {
    let body = serde_json::to_value(value).map_err(|e| CliError::runtime(e.to_string()))?;
    let line = match body {
        Value::Object(map) => {
            let mut obj = serde_json::Map::new();
            obj.insert("schema".into(), json!(SCHEMA));
            obj.extend(map);
            Value::Object(obj)
        }
        other => json!({ "schema": SCHEMA, "value": other }),
    };
    Ok(line.to_string())
}

pub fn header_line<C: Serialize>(command: &str, config: &C) -> CliResult<String> {
    let config = serde_json::to_value(config).map_err(|e| CliError::runtime(e.to_string()))?;
    record_line(&json!({ "kind": "header", "command": command, "config": config }))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let fail = |e: std::io::Error| CliError::runtime(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Rows as CSV with a header taken from the field names.
pub fn csv_text<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let fail = |e: &dyn std::fmt::Display| CliError::runtime(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| fail(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| fail(&e))?;
    String::from_utf8(bytes).map_err(|e| fail(&e))
}

/// Lines joined with a trailing newline.
pub fn join_lines(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// `path` with its extension replaced (or appended) by `ext`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
