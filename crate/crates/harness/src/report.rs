//! Aggregate finished runs into one comparison table.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// Scan `root` for `*/summary.json` files and render a CSV table, one row
/// per run, sorted by experiment name. Unreadable summaries are skipped
/// with a note on stderr rather than failing the whole report.
pub fn merge_runs(root: &Path) -> Result<String> {
    let mut rows: Vec<(String, String)> = Vec::new();
    let entries = std::fs::read_dir(root)
        .with_context(|| format!("reading run directory {}", root.display()))?;
    for entry in entries {
        let entry = entry?;
        let summary_path = entry.path().join("summary.json");
        if !summary_path.is_file() {
            continue;
        }
        let text = match std::fs::read_to_string(&summary_path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("skipping {}: {e}", summary_path.display());
                continue;
            }
        };
        let v: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("skipping {}: {e}", summary_path.display());
                continue;
            }
        };
        let name = v
            .get("experiment")
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_string();
        let num = |key: &str| -> String {
            match v.get(key) {
                Some(Value::Number(n)) => format!("{:.6}", n.as_f64().unwrap_or(f64::NAN)),
                Some(Value::Null) | None => String::new(),
                Some(other) => other.to_string(),
            }
        };
        let int = |key: &str| -> String {
            v.get(key)
                .and_then(Value::as_u64)
                .map(|n| n.to_string())
                .unwrap_or_default()
        };
        let row = format!(
            "{name},{},{},{},{},{},{}",
            int("seed"),
            int("epochs_run"),
            num("test_error"),
            num("best_val_error"),
            num("final_norm_activation"),
            num("wall_seconds"),
        );
        rows.push((name, row));
    }
    rows.sort();
    let mut out = String::from(
        "experiment,seed,epochs_run,test_error,best_val_error,norm_activation,wall_seconds\n",
    );
    for (_, row) in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}
