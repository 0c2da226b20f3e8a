//! JSON and CSV emission.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Render `value` as pretty JSON, or as CSV rows.
///
/// For CSV an array of objects becomes one row per element and a single
/// object becomes one row; nested values are written as JSON text.
pub fn render<T: Serialize>(value: &T, format: Format) -> anyhow::Result<String> {
    let v = serde_json::to_value(value)?;
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&v)? + "\n"),
        Format::Csv => to_csv(&v),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn to_csv(v: &Value) -> anyhow::Result<String> {
    let rows: Vec<&serde_json::Map<String, Value>> = match v {
        Value::Array(items) => items.iter().filter_map(Value::as_object).collect(),
        Value::Object(map) => vec![map],
        other => anyhow::bail!("cannot write {other} as CSV"),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.keys())?;
        for row in &rows {
            w.write_record(first.keys().map(|k| row.get(k).map(cell).unwrap_or_default()))?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
