//! Optional TOML config: one table per subcommand, keys spelled like the
//! flags (`group-size = 8` under `[score]`). Flags win over file values.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const CONFIG_ENV: &str = "ZZ_CONFIG";

/// The `[section]` table of the config file named by `explicit` or
/// `$ZZ_CONFIG`, if any.
pub fn load_section(explicit: Option<&Path>, section: &str) -> CliResult<Option<Value>> {
    let path: Option<PathBuf> = explicit.map(Path::to_path_buf).or_else(|| env::var_os(CONFIG_ENV).map(PathBuf::from));
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(&path).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    match table.get(section) {
        None => Ok(None),
        Some(toml::Value::Table(t)) => {
            let v = serde_json::to_value(t).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
            Ok(Some(v))
        }
        Some(_) => Err(CliError::input(format!("config {}: [{section}] must be a table", path.display()))),
    }
}

/// Overlays the flags that were given onto the file section.
pub fn layered<T: Serialize + DeserializeOwned + Clone>(flags: &T, file: Option<Value>, section: &str) -> CliResult<T> {
    let Some(Value::Object(mut merged)) = file else { return Ok(flags.clone()) };
    if let Value::Object(given) = to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::input(format!("config [{section}]: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::runtime(e.to_string()))
}

/// The value of a setting that has no default.
pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value.clone().ok_or_else(|| CliError::input(format!("missing --{flag} (flag or config key)")))
}
