//! File access and argument parsing shared by the commands.

use std::collections::BTreeMap;
use std::path::Path;

use delayinv::DelaySystemSpec;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{CliError, CliResult};

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_spec(path: &Path) -> CliResult<DelaySystemSpec> {
    DelaySystemSpec::from_json_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_bytes(path, (text + "\n").as_bytes())
}

/// Inline JSON, or the contents of the named file.
pub(crate) fn inline_or_file<T: DeserializeOwned>(arg: &str) -> CliResult<T> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{arg}: {e}")))
}

/// Comma-separated non-negative integers.
pub(crate) fn parse_list(flag: &str, s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::Input(format!("{flag}: '{t}' is not a non-negative integer")))
        })
        .collect()
}

/// `i=v,j=w` into an index map; duplicate indices are rejected.
pub(crate) fn parse_fix(s: &str) -> CliResult<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let bad = || CliError::Input(format!("--fix: expected index=value, got '{item}'"));
        let (i, v) = item.split_once('=').ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        if out.insert(i, v).is_some() {
            return Err(CliError::Input(format!("--fix: coordinate {i} given twice")));
        }
    }
    Ok(out)
}
