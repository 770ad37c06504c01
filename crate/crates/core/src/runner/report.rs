use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{RunReport, SweepRow};
use crate::error::{Error, Result};

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// A row of `report.csv`. The aggregate row has seed `mean` and carries
/// the standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub seed: String,
    pub status: String,
    pub test_acc: Option<f64>,
    pub std: Option<f64>,
    pub val_acc: Option<f64>,
    pub filter_precision: Option<f64>,
    pub error: String,
}

pub fn report_rows(report: &RunReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = report
        .seeds
        .iter()
        .map(|s| ReportRow {
            seed: s.seed.to_string(),
            status: if s.error.is_some() { "aborted" } else { "ok" }.into(),
            test_acc: s.test_acc,
            std: None,
            val_acc: s.val_acc,
            filter_precision: s.filter_precision(),
            error: s.error.clone().unwrap_or_default(),
        })
        .collect();
    rows.push(ReportRow {
        seed: "mean".into(),
        status: format!(
            "{}/{} ok",
            report.seeds.len() - report.aborted(),
            report.seeds.len()
        ),
        test_acc: Some(report.mean),
        std: Some(report.std),
        val_acc: None,
        filter_precision: report.mean_filter_precision(),
        error: String::new(),
    });
    rows
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_rows(
        path,
        &[
            "seed",
            "status",
            "test_acc",
            "std",
            "val_acc",
            "filter_precision",
            "error",
        ],
        &report_rows(report),
    )
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_history_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for s in &report.seeds {
        for h in &s.history {
            let weights: Vec<String> = h.weights.iter().map(|w| w.to_string()).collect();
            rows.push((
                s.seed,
                h.round,
                h.window,
                h.lower_loss.to_string(),
                fmt_opt(h.upper_loss),
                fmt_opt(h.upper_loss_after),
                h.val_acc.to_string(),
                weights.join(";"),
            ));
        }
    }
    write_rows(
        path,
        &[
            "seed",
            "round",
            "window",
            "lower_loss",
            "upper_loss",
            "upper_loss_after",
            "val_acc",
            "weights",
        ],
        &rows,
    )
}

pub fn write_audit_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for s in &report.seeds {
        for a in &s.audit {
            rows.push((
                s.seed,
                a.round,
                a.action.as_str(),
                a.node,
                a.label,
                a.source.as_str(),
                a.label_correct.map(|b| b.to_string()).unwrap_or_default(),
            ));
        }
    }
    write_rows(
        path,
        &[
            "seed",
            "round",
            "action",
            "node",
            "label",
            "source",
            "label_correct",
        ],
        &rows,
    )
}

pub fn write_rounds_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for s in &report.seeds {
        for m in &s.rounds {
            rows.push((
                s.seed,
                m.round,
                m.clean_size,
                m.clean_correct,
                m.removed,
                m.removed_corrupted,
                m.added,
                m.added_correct,
                m.supervising,
                m.supervising_correct,
                m.best_val_acc.to_string(),
            ));
        }
    }
    write_rows(
        path,
        &[
            "seed",
            "round",
            "clean_size",
            "clean_correct",
            "removed",
            "removed_corrupted",
            "added",
            "added_correct",
            "supervising",
            "supervising_correct",
            "best_val_acc",
        ],
        &rows,
    )
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:.2}", 100.0 * x),
        _ => "-".into(),
    }
}

/// Aligned plain-text summary, including wall times.
pub fn render_table(report: &RunReport) -> String {
    let mut lines = vec![[
        "seed".to_string(),
        "status".into(),
        "test %".into(),
        "val %".into(),
        "filter prec %".into(),
        "time s".into(),
    ]];
    for s in &report.seeds {
        lines.push([
            s.seed.to_string(),
            if s.error.is_some() { "aborted" } else { "ok" }.into(),
            pct(s.test_acc),
            pct(s.val_acc),
            pct(s.filter_precision()),
            format!("{:.2}", s.wall_time),
        ]);
    }
    lines.push([
        "mean".into(),
        format!(
            "{}/{} ok",
            report.seeds.len() - report.aborted(),
            report.seeds.len()
        ),
        format!("{} ± {}", pct(Some(report.mean)), pct(Some(report.std))),
        String::new(),
        pct(report.mean_filter_precision()),
        format!("{:.2}", report.wall_time),
    ]);
    let widths: Vec<usize> = (0..6)
        .map(|c| {
            lines
                .iter()
                .map(|l| l[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!("mode: {}\n", report.mode.as_str());
    for (n, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if n == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * 5));
        }
    }
    for s in &report.seeds {
        if let Some(e) = &s.error {
            let _ = writeln!(out, "seed {}: {e}", s.seed);
        }
    }
    out
}

/// Writes `report.csv`, `report.txt`, `history.csv`, `rounds.csv` and
/// `audit.csv` into `dir`, creating it if needed. Returns the paths.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [
        "report.csv",
        "report.txt",
        "history.csv",
        "rounds.csv",
        "audit.csv",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();
    write_report_csv(report, &paths[0])?;
    fs::write(&paths[1], render_table(report))?;
    write_history_csv(report, &paths[2])?;
    write_rounds_csv(report, &paths[3])?;
    write_audit_csv(report, &paths[4])?;
    Ok(paths)
}

/// `param,value,mean,std,seeds_ok,seeds_aborted`, one row per grid value.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let data: Vec<_> = rows
        .iter()
        .map(|r| {
            (
                r.param.as_str(),
                r.value,
                r.report.mean,
                r.report.std,
                r.report.seeds.len() - r.report.aborted(),
                r.report.aborted(),
            )
        })
        .collect();
    write_rows(
        path,
        &["param", "value", "mean", "std", "seeds_ok", "seeds_aborted"],
        &data,
    )
}
