//! Deterministic report emission: JSON lines plus a fixed-column CSV.
//!
//! Reports must be byte-identical across reruns and thread counts, so float
//! fields are normalized (12 significant digits) before serialization, CSV
//! floats print in fixed scientific notation, and nothing time- or
//! path-dependent enters a record.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::{CliError, Format};

/// Round to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exponent = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - exponent);
    if !scale.is_finite() || scale == 0.0 {
        return x;
    }
    (x * scale).round() / scale
}

/// CSV cell for a float: 12 significant digits, scientific.
pub fn csv_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Normalize every fractional number in a JSON tree to 12 significant
/// digits.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(sig12(x)) {
                        *value = Value::Number(rounded);
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serialize records as JSON lines and rows as CSV, write whichever formats
/// were requested atomically, and return the paths written. Partial outputs
/// are removed on failure.
pub fn emit_report(
    out_dir: &Path,
    name: &str,
    records: &[Value],
    csv_header: &[&str],
    csv_rows: &[Vec<String>],
    format: Format,
) -> Result<Vec<PathBuf>, CliError> {
    if records.is_empty() {
        return Err(CliError::Config(
            "emit_report called with no records".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;

    let mut jsonl = String::new();
    for record in records {
        let mut record = record.clone();
        round_floats(&mut record);
        jsonl.push_str(&serde_json::to_string(&record).map_err(|e| CliError::Io(e.to_string()))?);
        jsonl.push('\n');
    }

    let mut csv = csv_header.join(",");
    csv.push('\n');
    for row in csv_rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let mut written = Vec::new();
    let mut targets = Vec::new();
    if matches!(format, Format::Json | Format::Both) {
        targets.push((out_dir.join(format!("{name}.jsonl")), jsonl));
    }
    if matches!(format, Format::Csv | Format::Both) {
        targets.push((out_dir.join(format!("{name}.csv")), csv));
    }
    for (path, contents) in targets {
        let tmp = path.with_extension("tmp");
        let result = fs::write(&tmp, &contents).and_then(|()| fs::rename(&tmp, &path));
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            for w in &written {
                let _ = fs::remove_file(w);
            }
            return Err(CliError::Io(format!("{}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}
