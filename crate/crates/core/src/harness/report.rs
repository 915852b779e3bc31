use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::run::{RunManifest, MANIFEST_FILE};
use crate::error::{Error, Result};

const MAX_TABLE_ROWS: usize = 40;
const MAX_INLINE: usize = 8;

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6e}"),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

/// Short arrays of scalars (or of short scalar arrays) print inline.
fn inline(v: &Value) -> Option<String> {
    if let Some(s) = scalar(v) {
        return Some(s);
    }
    let items = v.as_array()?;
    if items.len() > MAX_INLINE {
        return None;
    }
    let parts: Option<Vec<String>> = items
        .iter()
        .map(|x| scalar(x).or_else(|| x.as_array().filter(|a| a.len() <= 3).and_then(|_| inline(x))))
        .collect();
    parts.map(|p| format!("[{}]", p.join(", ")))
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "  {}", padded.join("  ").trim_end());
    };
    line(out, header);
    line(out, &width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        line(out, r);
    }
}

/// Flat objects in an array become table rows.
fn object_rows(items: &[Value]) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let first = items.first()?.as_object()?;
    let header: Vec<String> = first.keys().cloned().collect();
    let mut rows = Vec::new();
    for item in items.iter().take(MAX_TABLE_ROWS) {
        let obj = item.as_object()?;
        rows.push(header.iter().map(|k| obj.get(k).and_then(inline).unwrap_or_default()).collect());
    }
    Some((header, rows))
}

fn render_json(out: &mut String, name: &str, value: &Value) {
    let _ = writeln!(out, "\n{name}");
    let Some(obj) = value.as_object() else {
        let _ = writeln!(out, "  {}", inline(value).unwrap_or_else(|| "(not an object)".into()));
        return;
    };
    let mut pairs = Vec::new();
    let mut tables = Vec::new();
    for (k, v) in obj {
        if let Some(s) = inline(v) {
            pairs.push(vec![k.clone(), s]);
        } else if let Some(items) = v.as_array() {
            match object_rows(items) {
                Some(t) => tables.push((k.clone(), items.len(), t)),
                None => pairs.push(vec![k.clone(), format!("[{} values]", items.len())]),
            }
        } else {
            pairs.push(vec![k.clone(), "{...}".into()]);
        }
    }
    table(out, &["field".into(), "value".into()], &pairs);
    for (k, n, (header, rows)) in tables {
        let shown = if n > rows.len() { format!(" (first {} of {n})", rows.len()) } else { String::new() };
        let _ = writeln!(out, "\n  {k}{shown}");
        table(out, &header, &rows);
    }
}

/// Plain-text summary of a run directory: manifest, warnings, files and
/// every JSON result.
pub fn render_report(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::config("run-dir", format!("cannot read {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut out = String::new();
    let verdict = match manifest.pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "no verdict",
    };
    let _ = writeln!(out, "run {} ({}): {verdict}", manifest.name, manifest.experiment.as_str());
    let rows = vec![
        vec!["config sha256".into(), manifest.config_hash.clone()],
        vec!["version".into(), manifest.version.clone()],
        vec!["master seed".into(), manifest.master_seed.to_string()],
        vec!["started".into(), manifest.started.clone()],
        vec!["finished".into(), manifest.finished.clone()],
    ];
    table(&mut out, &["field".into(), "value".into()], &rows);

    let _ = writeln!(out, "\nwarnings");
    let rows: Vec<Vec<String>> = manifest
        .warnings
        .iter()
        .flat_map(|(module, c)| c.iter().map(move |(k, v)| vec![module.clone(), k.clone(), v.to_string()]))
        .collect();
    table(&mut out, &["module".into(), "counter".into(), "value".into()], &rows);

    let _ = writeln!(out, "\nfiles");
    let rows: Vec<Vec<String>> = manifest
        .files
        .iter()
        .map(|f| vec![f.path.clone(), f.bytes.to_string(), f.sha256[..16].to_string()])
        .collect();
    table(&mut out, &["path".into(), "bytes".into(), "sha256".into()], &rows);

    for f in manifest.files.iter().filter(|f| f.path.ends_with(".json")) {
        let value: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(&f.path))?)?;
        render_json(&mut out, &f.path, &value);
    }
    Ok(out)
}
