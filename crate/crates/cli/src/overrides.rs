//! `--override key.path=value` edits applied to the parsed scenario table.

use crate::CliError;

/// Parse `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Set each dotted path. Numeric segments index arrays (`outputs.0.tol`);
/// missing tables are created.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (path, value) =
            o.split_once('=').ok_or_else(|| CliError::Scenario(format!("override `{o}` is not key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Scenario(format!("override `{o}` has an empty key")));
        }
        set_path(table, &keys, parse_value(value.trim())).map_err(|e| CliError::Scenario(format!("override `{o}`: {e}")))?;
    }
    Ok(())
}

fn set_path(table: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<(), String> {
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = Slot::Table(table);
    for k in parents {
        cur = cur.child(k)?;
    }
    cur.set(last, value)
}

enum Slot<'a> {
    Table(&'a mut toml::Table),
    Array(&'a mut Vec<toml::Value>),
}

impl<'a> Slot<'a> {
    fn child(self, key: &str) -> Result<Slot<'a>, String> {
        let v = match self {
            Slot::Table(t) => t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            Slot::Array(a) => {
                let i: usize = key.parse().map_err(|_| format!("`{key}` is not an array index"))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| format!("index {i} out of range (length {len})"))?
            }
        };
        match v {
            toml::Value::Table(t) => Ok(Slot::Table(t)),
            toml::Value::Array(a) => Ok(Slot::Array(a)),
            _ => Err(format!("`{key}` is not a table or array")),
        }
    }

    fn set(self, key: &str, value: toml::Value) -> Result<(), String> {
        match self {
            Slot::Table(t) => {
                t.insert(key.to_string(), value);
                Ok(())
            }
            Slot::Array(a) => {
                let i: usize = key.parse().map_err(|_| format!("`{key}` is not an array index"))?;
                let len = a.len();
                *a.get_mut(i).ok_or_else(|| format!("index {i} out of range (length {len})"))? = value;
                Ok(())
            }
        }
    }
}
