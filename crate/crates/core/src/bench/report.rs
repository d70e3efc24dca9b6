use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::orchestrator::TaskResult;

use super::Report;

pub const SR_FILE: &str = "sr_by_difficulty.csv";
pub const LATENCY_FILE: &str = "latency_by_toolcount.csv";
pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "task_results.jsonl";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, text).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn sr_csv(report: &Report) -> String {
    let mut out = String::from("scheme,difficulty,sr,n\n");
    for c in &report.sr {
        let _ = writeln!(out, "{},{},{:.4},{}", c.scheme, c.difficulty, c.sr, c.n);
    }
    out
}

pub fn latency_csv(report: &Report) -> String {
    let mut out = String::from("scheme,mode,tool_count,mean_latency_s,n\n");
    for c in &report.latency {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{}",
            c.scheme, c.mode, c.tool_count, c.mean_latency_s, c.n
        );
    }
    out
}

/// Writes the CSV tables and `report.json` into `dir` (created if needed),
/// plus one JSON line per full result when `results` is given.
pub fn emit_report(
    report: &Report,
    results: Option<&[TaskResult]>,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut json = serde_json::to_string_pretty(report).expect("serializable");
    json.push('\n');
    let mut written = vec![
        write(dir.join(SR_FILE), &sr_csv(report))?,
        write(dir.join(LATENCY_FILE), &latency_csv(report))?,
        write(dir.join(REPORT_FILE), &json)?,
    ];
    if let Some(results) = results {
        let mut lines = String::new();
        for r in results {
            lines.push_str(&serde_json::to_string(r).expect("serializable"));
            lines.push('\n');
        }
        written.push(write(dir.join(RESULTS_FILE), &lines)?);
    }
    Ok(written)
}

pub fn read_report(dir: &Path) -> Result<Report, ReportError> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json { path, source })
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| rows.iter().map(|r| r[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

/// Aligned plain-text rendering of the report cells.
pub fn format_tables(report: &Report) -> String {
    let sr: Vec<Vec<String>> = report
        .sr
        .iter()
        .map(|c| vec![c.scheme.to_string(), c.difficulty.to_string(), format!("{:.4}", c.sr), c.n.to_string()])
        .collect();
    let lat: Vec<Vec<String>> = report
        .latency
        .iter()
        .map(|c| {
            vec![
                c.scheme.to_string(),
                c.mode.to_string(),
                c.tool_count.to_string(),
                format!("{:.4}", c.mean_latency_s),
                c.n.to_string(),
            ]
        })
        .collect();
    let inv: Vec<Vec<String>> = report
        .invocations
        .iter()
        .map(|c| {
            vec![
                c.scheme.to_string(),
                c.difficulty.to_string(),
                format!("{:.2}", c.mean_planning_invocations),
                format!("{:.2}", c.mean_decomposition_invocations),
            ]
        })
        .collect();
    format!(
        "Success rate\n{}\nMean execution latency (successful runs)\n{}\nPlanner invocations per task\n{}\nconfig digest {}\n",
        table(&["scheme", "difficulty", "sr", "n"], &sr),
        table(&["scheme", "mode", "tools", "latency_s", "n"], &lat),
        table(&["scheme", "difficulty", "plans", "decompositions"], &inv),
        report.config_digest
    )
}
