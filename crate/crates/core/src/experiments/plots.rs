//! Grid CSV reading with schema checks, and matplotlib script generation.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::Metric;
use super::{CellResult, GRID_HEADER};
use crate::error::{Error, Result};

fn schema(line: usize, reason: impl Into<String>) -> Error {
    Error::Schema { line, reason: reason.into() }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| schema(line, format!("column {name}: cannot parse {v:?}")))
}

/// Parse grid CSV text; errors name the 1-based offending line.
pub fn parse_grid_csv(text: &str) -> Result<Vec<CellResult>> {
    let mut lines = text.lines();
    match lines.next() {
        None => return Err(schema(1, "empty file")),
        Some(h) if h.trim_end() != GRID_HEADER => return Err(schema(1, format!("header must be {GRID_HEADER:?}"))),
        Some(_) => {}
    }
    let mut rows = Vec::new();
    for (i, raw) in lines.enumerate() {
        let ln = i + 2;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.splitn(12, ',').collect();
        if f.len() != 12 {
            return Err(schema(ln, format!("expected 12 fields, found {}", f.len())));
        }
        let success = match f[5] {
            "0" => false,
            "1" => true,
            o => return Err(schema(ln, format!("success must be 0 or 1, found {o:?}"))),
        };
        rows.push(CellResult {
            d: field(ln, "d", f[0])?,
            n: field(ln, "n", f[1])?,
            sigma: field(ln, "sigma", f[2])?,
            trial: field(ln, "trial", f[3])?,
            seed: field(ln, "seed", f[4])?,
            success,
            abs_distance: field(ln, "abs_distance", f[6])?,
            test_distance: field(ln, "test_distance", f[7])?,
            nic_max_lhs: field(ln, "nic_max_lhs", f[8])?,
            solver_iterations: field(ln, "solver_iterations", f[9])?,
            wall_ms: field(ln, "wall_ms", f[10])?,
            note: f[11].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(schema(2, "no data rows"));
    }
    Ok(rows)
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<CellResult>> {
    parse_grid_csv(&fs::read_to_string(path)?)
}

fn metric_column(m: Metric) -> &'static str {
    match m {
        Metric::NicRate => "nic_max_lhs",
        other => other.name(),
    }
}

fn script(csv_name: &str, metric: Metric) -> String {
    let col = metric_column(metric);
    let value = if metric == Metric::NicRate {
        format!("1.0 if float(row[\"{col}\"]) < 1.0 else 0.0")
    } else {
        format!("float(row[\"{col}\"])")
    };
    let name = metric.name();
    format!(
        r#"import csv
import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, "{csv_name}")
COLUMNS = ["d", "n", "sigma", "{col}"]
METRIC = "{name}"


def value(row):
    return {value}


cells = defaultdict(list)
with open(CSV, newline="") as fh:
    for row in csv.DictReader(fh):
        v = value(row)
        if not math.isnan(v):
            cells[(float(row["sigma"]), int(row["d"]), int(row["n"]))].append(v)

for sigma in sorted({{k[0] for k in cells}}):
    ds = sorted({{k[1] for k in cells if k[0] == sigma}})
    ns = sorted({{k[2] for k in cells if k[0] == sigma}})
    grid = [[float("nan")] * len(ns) for _ in ds]
    for i, d in enumerate(ds):
        for j, n in enumerate(ns):
            vals = cells.get((sigma, d, n))
            if vals:
                grid[i][j] = sum(vals) / len(vals)
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="RdBu_r",
                   extent=(ns[0], ns[-1], ds[0], ds[-1]) if len(ns) > 1 and len(ds) > 1 else None)
    if len(ns) > 1 and len(ds) > 1:
        ax.plot([2 * d for d in ds], ds, "k--", label="n = 2d")
        ax.set_xlim(ns[0], ns[-1])
        ax.legend(loc="upper left")
    ax.set_xlabel("n")
    ax.set_ylabel("d")
    ax.set_title("%s, sigma = %g" % (METRIC, sigma))
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "%s_sigma%g.png" % (METRIC, sigma)))
    plt.close(fig)
"#
    )
}

/// Validate the grid CSV and write one plotting script per metric next to
/// it (`<stem>_<metric>.py`). Scripts are never executed.
pub fn emit_plots(csv_path: &Path) -> Result<Vec<PathBuf>> {
    read_grid_csv(csv_path)?;
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    let csv_name = csv_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidInput("csv path has no file name".into()))?;
    let mut out = Vec::new();
    for m in Metric::ALL {
        let p = dir.join(format!("{stem}_{}.py", m.name()));
        fs::write(&p, script(csv_name, m))?;
        out.push(p);
    }
    Ok(out)
}
