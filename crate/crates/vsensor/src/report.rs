//! Report artifacts: `report.md` (percentages, two decimals), `report.csv`
//! (raw fractions, full precision), `scatter.csv` and `series_<id>.csv`.
//!
//! `report.csv` columns: `model,metric,range,count,value`. `metric` is one
//! of `relative`, `noise`, `pgd`, `milp`, `dual`; `range` is a bin label
//! such as `[0.6-0.8)`; an empty `value` marks an empty bin.

use std::fmt::Write as _;
use std::path::Path;

use vsensor_core::data::{FULL_RANGE, RANGE_BINS};
use vsensor_core::{EvalTable, ExampleRecord, InputBox, Metric, BIN_COUNT};

use crate::error::{format_err, io_err, Error, Result};
use crate::io::write_atomic;

fn range_label(col: usize) -> &'static str {
    if col < RANGE_BINS.len() {
        RANGE_BINS[col].label
    } else {
        FULL_RANGE.label
    }
}

fn range_index(label: &str) -> Option<usize> {
    (0..BIN_COUNT).find(|&c| range_label(c) == label)
}

/// Markdown tables, one section per model.
pub fn render_markdown(tables: &[EvalTable]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "## {}\n", t.label);
        let mut rows: Vec<Vec<String>> = Vec::new();
        rows.push(
            std::iter::once("Metric".to_string())
                .chain((0..BIN_COUNT).map(|c| range_label(c).to_string()))
                .collect(),
        );
        rows.push(
            std::iter::once("Examples".to_string())
                .chain(t.counts.iter().map(|n| n.to_string()))
                .collect(),
        );
        for m in Metric::ALL {
            rows.push(
                std::iter::once(m.label().to_string())
                    .chain((0..BIN_COUNT).map(|c| match t.get(m, c) {
                        Some(v) => format!("{:.2}", 100.0 * v),
                        None => "-".into(),
                    }))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..=BIN_COUNT)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for (r, row) in rows.iter().enumerate() {
            out.push('|');
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, " {cell:<w$} |", w = widths[c]);
                } else {
                    let _ = write!(out, " {cell:>w$} |", w = widths[c]);
                }
            }
            out.push('\n');
            if r == 0 {
                out.push('|');
                for (c, w) in widths.iter().enumerate() {
                    let dashes = "-".repeat(*w);
                    if c == 0 {
                        let _ = write!(out, " {dashes} |");
                    } else {
                        let _ = write!(out, " {}: |", &dashes[1..]);
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_markdown(path: &Path, tables: &[EvalTable]) -> Result<()> {
    let text = render_markdown(tables);
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

pub fn write_csv(path: &Path, tables: &[EvalTable]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "metric", "range", "count", "value"])?;
        for t in tables {
            for m in Metric::ALL {
                for c in 0..BIN_COUNT {
                    let value = t.get(m, c).map(|v| v.to_string()).unwrap_or_default();
                    out.write_record([t.label.as_str(), m.key(), range_label(c), &t.counts[c].to_string(), &value])?;
                }
            }
        }
        out.flush()
    })
}

/// Inverse of [`write_csv`]; tables come back in file order.
pub fn read_csv(path: &Path) -> Result<Vec<EvalTable>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut tables: Vec<EvalTable> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            row,
            msg: msg.into(),
        };
        if rec.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let metric = Metric::parse_key(&rec[1]).ok_or_else(|| bad("unknown metric"))?;
        let col = range_index(&rec[2]).ok_or_else(|| bad("unknown range"))?;
        let count: usize = rec[3].parse().map_err(|_| bad("count is not an integer"))?;
        let value = match &rec[4] {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|_| bad("value is not a number"))?),
        };
        if tables.last().is_none_or(|t| t.label != rec[0]) {
            tables.push(EvalTable {
                label: rec[0].to_string(),
                counts: [0; BIN_COUNT],
                values: [[None; BIN_COUNT]; 5],
            });
        }
        let t = tables.last_mut().expect("pushed above");
        t.counts[col] = count;
        t.values[Metric::ALL.iter().position(|m| *m == metric).expect("listed")][col] = value;
    }
    Ok(tables)
}

/// `(y, relative_error)` per test example, for the error-versus-target plot.
pub fn write_scatter(path: &Path, records: &[ExampleRecord]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["y", "relative_error"])?;
        for r in records {
            out.write_record([r.y.to_string(), r.clean.to_string()])?;
        }
        out.flush()
    })
}

/// The series part of a clean input, a perturbed input and the admissible
/// band, one row per time step.
pub fn write_series(path: &Path, clean: &[f64], perturbed: &[f64], bx: &InputBox) -> Result<()> {
    let k = clean.len();
    if perturbed.len() != k || bx.dim() != k {
        return Err(format_err(path, "series, perturbation and box differ in length"));
    }
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "clean", "perturbed", "band_lo", "band_hi"])?;
        for t in 0..k - 1 {
            out.write_record([
                t.to_string(),
                clean[t].to_string(),
                perturbed[t].to_string(),
                bx.lo[t].to_string(),
                bx.hi[t].to_string(),
            ])?;
        }
        out.flush()
    })
}
