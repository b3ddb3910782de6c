//! Output formatting: JSON summaries, CSV tables and the console table.
//! All files go through `write_atomic` so partially written output is never
//! observed at the final path.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{CvSummary, StressSeries};

/// Write `bytes` to `path` via a temp file in the same directory followed by
/// an atomic rename. Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty-printed summary JSON with a trailing newline. Serialization order
/// is fixed by the struct definitions, so equal summaries yield equal bytes.
pub fn summary_json(summary: &CvSummary) -> Result<String> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    Ok(text)
}

type MetricGetter = fn(&crate::eval::ActivationSummary) -> &crate::eval::MetricSummary;

const TABLE_METRICS: [(&str, MetricGetter); 5] = [
    ("Weighted Precision", |a| &a.weighted_precision),
    ("Accuracy", |a| &a.accuracy),
    ("Weighted Recall", |a| &a.weighted_recall),
    ("AUC", |a| &a.auc),
    ("Weighted F1", |a| &a.weighted_f1),
];

/// CSV table of mean scores (as percentages) per metric and activation.
pub fn table_csv(summary: &CvSummary, dataset_label: &str) -> String {
    let mut out = String::from("dataset,metric");
    for act in &summary.activations {
        let _ = write!(out, ",{}", act.activation);
    }
    out.push('\n');
    for (metric, get) in TABLE_METRICS {
        let _ = write!(out, "{dataset_label},{metric}");
        for act in &summary.activations {
            let _ = write!(out, ",{:.2}", get(act).mean * 100.0);
        }
        out.push('\n');
    }
    out
}

/// Human-readable table with mean ± std per cell, both as percentages.
pub fn render_table(summary: &CvSummary, dataset_label: &str) -> String {
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut header = vec![format!("{dataset_label} ({}x{}-fold)", summary.repeats, summary.k)];
    for act in &summary.activations {
        header.push(act.activation.clone());
    }
    cells.push(header);
    for (metric, get) in TABLE_METRICS {
        let mut row = vec![metric.to_string()];
        for act in &summary.activations {
            let m = get(act);
            row.push(format!("{:.2} \u{00b1} {:.2}", m.mean * 100.0, m.std * 100.0));
        }
        cells.push(row);
    }

    let n_cols = cells[0].len();
    let mut widths = vec![0usize; n_cols];
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (r, row) in cells.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                // left-align the label column
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        // trim trailing pad on the last column
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
        if r == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (n_cols - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Per-epoch dead-unit counts, one row per (epoch, activation) with epochs
/// outermost. Epochs are 1-based.
pub fn stress_csv(series: &[StressSeries]) -> String {
    let mut out = String::from("epoch,activation,dead_units\n");
    let epochs = series.iter().map(|s| s.dead_units.len()).max().unwrap_or(0);
    for epoch in 0..epochs {
        for s in series {
            if let Some(count) = s.dead_units.get(epoch) {
                let _ = writeln!(out, "{},{},{}", epoch + 1, s.activation, count);
            }
        }
    }
    out
}

/// Console rendering of a stress run: final dead-unit counts per activation.
pub fn render_stress(series: &[StressSeries]) -> String {
    let mut out = String::new();
    for s in series {
        let last = s.dead_units.last().copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "{:>8}: {:>4} / {} units dead after {} epochs (final mean loss {:.4})",
            s.activation,
            last,
            s.total_units,
            s.dead_units.len(),
            s.mean_loss.last().copied().unwrap_or(f64::NAN),
        );
    }
    out
}
