//! Text, JSON and CSV renderings of batch results, plus the synthetic examples table.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::{BatchReport, TrackRecord};
use crate::solver::{solve, Method, SolveStatus, SolverConfig};
use crate::synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" | "text" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format {s:?}; expected table, json or csv")),
        }
    }
}

/// `v` with 13 significant digits; scientific notation outside `[1e-6, 1e13)`.
pub fn significant(v: f64) -> String {
    const DIGITS: i32 = 13;
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    // The exponent after rounding to 13 digits, so 9.99…9 carries into 10.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let magnitude: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-6..DIGITS).contains(&magnitude) {
        return sci;
    }
    let decimals = (DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn emit_report(report: &BatchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => table(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("reports serialize") + "\n",
        ReportFormat::Csv => csv(&report.tracks),
    }
}

const TABLE_HEADER: [&str; 6] = ["n", "# points", "ACT(s)", "R.E.", "optimal", "failed"];

fn table(report: &BatchReport) -> String {
    let mut rows: Vec<[String; 6]> = Vec::new();
    rows.push(TABLE_HEADER.map(String::from));
    for r in &report.per_n {
        rows.push([
            r.n.to_string(),
            r.points.to_string(),
            significant(r.act),
            significant(r.reprojection_error),
            r.optimal.to_string(),
            r.failures.to_string(),
        ]);
    }
    let body = rows.len() > 1;
    if body {
        let t = &report.totals;
        rows.push([
            "Total".to_string(),
            t.points.to_string(),
            significant(t.seconds),
            significant(t.reprojection_error),
            t.optimal.to_string(),
            t.failures.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ");
    let mut out = String::new();
    let last = rows.len() - 1;
    for (i, row) in rows.iter().enumerate() {
        if body && i == last {
            out.push_str(&rule);
            out.push('\n');
        }
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    if body {
        let _ = writeln!(
            out,
            "\nmethod {}; {} tracks in file, {} processed, {} skipped",
            report.method, report.tracks_in_file, report.tracks_processed, report.tracks_skipped
        );
    }
    out
}

pub const CSV_HEADER: [&str; 15] = [
    "id",
    "views",
    "x",
    "y",
    "z",
    "cost",
    "status",
    "iterations",
    "kantorovich_distance",
    "rho_squared",
    "gamma_squared",
    "initial_cost",
    "numerically_optimal",
    "seconds",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-track records, one row each. Floats use the shortest round-trip form.
fn csv(tracks: &[TrackRecord]) -> String {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for t in tracks {
        let [x, y, z] = t.solution.map(|s| s.map(Some)).unwrap_or([None; 3]);
        w.write_record([
            t.id.clone(),
            t.views.to_string(),
            opt(x),
            opt(y),
            opt(z),
            opt(t.cost),
            t.status.map(|s| s.name().to_string()).unwrap_or_default(),
            t.iterations.to_string(),
            opt(t.kantorovich_distance),
            opt(t.rho_squared),
            opt(t.gamma_squared),
            opt(t.initial_cost),
            t.numerically_optimal.to_string(),
            t.seconds.to_string(),
            t.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// One row of the synthetic examples table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub name: String,
    pub method: Method,
    pub point: [f64; 3],
    pub cost: f64,
    pub status: SolveStatus,
}

/// Solves SA2, SA3, SA4 and Con with `config`.
pub fn run_examples(config: &SolverConfig) -> Vec<ExampleRow> {
    synthetic::REFERENCES
        .iter()
        .map(|r| {
            let report = solve(&r.problem(), config);
            let x = report.solution;
            ExampleRow {
                name: r.name.to_string(),
                method: config.method,
                point: [x.x, x.y, x.z],
                cost: report.cost,
                status: report.status,
            }
        })
        .collect()
}

/// Examples table with 15 decimals on every value.
pub fn examples_table(rows: &[ExampleRow]) -> String {
    let mut out = String::from("Exmp.  Method           Triangulation result                                       Reprojection error\n");
    for r in rows {
        let point = format!("({:.15},{:.15},{:.15})", r.point[0], r.point[1], r.point[2]);
        let _ = writeln!(out, "{:<6} {:<16} {:<58} {:.15}", r.name, r.method.name(), point, r.cost);
    }
    out
}
