//! Report rendering: schema-stable JSON and flat CSV tables.
//!
//! JSON documents carry the whole [`RunReport`] (`experiment`, `config`,
//! `checks`, `curves`, `timings`, `overall_pass`) and deserialize back to
//! an identical report. CSV output is two tables: the check rows
//! (`check,value,bound,pass`) and, when the report has curves, a companion
//! table with one `curve,scale,value` row per point. Numbers use Rust's
//! shortest round-trip formatting, so identical reports render to
//! byte-identical files.

use crate::config::OutputFormat;
use crate::experiments::RunReport;
use std::path::{Path, PathBuf};

/// Pretty-printed JSON document (with a trailing newline).
pub fn render_json(report: &RunReport) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

/// The `check,value,bound,pass` table.
pub fn render_checks_csv(report: &RunReport) -> String {
    let mut out = String::from("check,value,bound,pass\n");
    for row in &report.checks {
        out.push_str(&format!(
            "{},{:e},{:e},{}\n",
            row.check, row.value, row.bound, row.pass
        ));
    }
    out
}

/// The `curve,scale,value` table (empty string when the report has no
/// curves).
pub fn render_curves_csv(report: &RunReport) -> String {
    if report.curves.is_empty() {
        return String::new();
    }
    let mut out = String::from("curve,scale,value\n");
    for curve in &report.curves {
        for p in &curve.points {
            out.push_str(&format!("{},{:e},{:e}\n", curve.name, p.scale, p.value));
        }
    }
    out
}

/// Path of the companion curve table for a CSV report written to `out`.
pub fn curves_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    out.with_file_name(format!("{stem}-curves.csv"))
}

/// Write (or print) the report; returns the paths written.
///
/// With `out` absent everything goes to stdout: the JSON document, or the
/// two CSV tables separated by a blank line. With `out` given, JSON writes
/// one file and CSV writes the check table to `out` plus the curve table
/// (if any) next to it.
pub fn emit(report: &RunReport, out: Option<&Path>, format: OutputFormat) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match (format, out) {
        (OutputFormat::Json, None) => print!("{}", render_json(report)?),
        (OutputFormat::Json, Some(path)) => {
            std::fs::write(path, render_json(report)?)?;
            written.push(path.to_path_buf());
        }
        (OutputFormat::Csv, None) => {
            print!("{}", render_checks_csv(report));
            let curves = render_curves_csv(report);
            if !curves.is_empty() {
                println!();
                print!("{curves}");
            }
        }
        (OutputFormat::Csv, Some(path)) => {
            std::fs::write(path, render_checks_csv(report))?;
            written.push(path.to_path_buf());
            let curves = render_curves_csv(report);
            if !curves.is_empty() {
                let cpath = curves_path(path);
                std::fs::write(&cpath, curves)?;
                written.push(cpath);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiments::run_experiment;

    fn sample_report() -> RunReport {
        let cfg = ExperimentConfig {
            grid_size: 16,
            samples_per_octave: 2,
            panels: 8,
            ..Default::default()
        };
        run_experiment("quadrature-oracle", &cfg).unwrap()
    }

    #[test]
    fn json_round_trips_to_an_identical_report() {
        let rep = sample_report();
        let text = render_json(&rep).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn csv_tables_have_the_documented_shape() {
        let rep = sample_report();
        let checks = render_checks_csv(&rep);
        let mut lines = checks.lines();
        assert_eq!(lines.next().unwrap(), "check,value,bound,pass");
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 4);
        assert_eq!(checks.lines().count(), 1 + rep.checks.len());

        let curves = render_curves_csv(&rep);
        assert_eq!(curves.lines().next().unwrap(), "curve,scale,value");
        let points: usize = rep.curves.iter().map(|c| c.points.len()).sum();
        assert_eq!(curves.lines().count(), 1 + points);
    }

    #[test]
    fn files_are_written_where_requested() {
        let rep = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("report.json");
        let written = emit(&rep, Some(&json_path), OutputFormat::Json).unwrap();
        assert_eq!(written, vec![json_path.clone()]);
        assert!(json_path.exists());

        let csv_path = dir.path().join("report.csv");
        let written = emit(&rep, Some(&csv_path), OutputFormat::Csv).unwrap();
        assert_eq!(written.len(), 2);
        assert!(written[1].ends_with("report-curves.csv"));
        for p in written {
            assert!(p.exists());
        }
    }
}
