//! Aggregated experiment results and their on-disk renderings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (method, mode, alpha, metric) cell aggregated over replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub mode: String,
    pub alpha: f64,
    pub metric: String,
    pub mean: f64,
    pub std_err: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::invalid_config(format!(
                "unknown format '{other}', expected csv or markdown"
            ))),
        }
    }
}

/// 17 significant digits; reparsing recovers the exact f64.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn display_method(method: &str) -> &str {
    match method {
        "vanilla" => "Vanilla",
        "vad" => "VAD",
        "vad_p" => "VAD(p)",
        "platt" => "Platt Scaling",
        "histogram" => "Histogram Binning",
        "scaling_binning" => "Scaling-Binning",
        "isotonic" => "Isotonic Regression",
        other => other,
    }
}

fn display_metric(metric: &str) -> &str {
    match metric {
        "calibration_error" => "Calibration error",
        "ece" => "ECE",
        "mce" => "MCE",
        "log_loss" => "Log loss",
        "log_loss_reduction" => "Log loss reduction",
        other => other,
    }
}

/// Percent-style metrics render as `8.55%±0.68%`; level-style metrics as
/// `0.0656±0.0019`.
fn fmt_cell(metric: &str, mean: f64, std_err: f64) -> String {
    match metric {
        "calibration_error" | "log_loss_reduction" => {
            format!("{:.2}%±{:.2}%", mean * 100.0, std_err * 100.0)
        }
        _ => format!("{mean:.4}±{std_err:.4}"),
    }
}

fn fmt_alpha(alpha: f64) -> String {
    let pct = alpha * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}

impl ReportTable {
    pub fn get(&self, method: &str, mode: &str, alpha: f64, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && r.mode == mode
                && (r.alpha - alpha).abs() < 1e-12
                && r.metric == metric
        })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Markdown => self.render_markdown(),
        }
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("method,mode,alpha,metric,mean,std_err,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method,
                r.mode,
                fmt17(r.alpha),
                r.metric,
                fmt17(r.mean),
                fmt17(r.std_err),
                r.reps
            ));
        }
        out
    }

    /// One table per metric: methods as rows, alphas as columns.
    pub fn render_markdown(&self) -> String {
        let mut metrics: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        let mut alphas: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !alphas.iter().any(|a| (a - r.alpha).abs() < 1e-12) {
                alphas.push(r.alpha);
            }
        }
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut method_keys: Vec<(String, String)> = Vec::new();
        for r in &self.rows {
            let key = (r.method.clone(), r.mode.clone());
            if !method_keys.contains(&key) {
                method_keys.push(key);
            }
        }

        let mut out = String::new();
        for metric in metrics {
            out.push_str(&format!("## {}\n\n", display_metric(metric)));
            out.push_str("| Method |");
            for a in &alphas {
                out.push_str(&format!(" α={} |", fmt_alpha(*a)));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in &alphas {
                out.push_str("---|");
            }
            out.push('\n');
            for (method, mode) in &method_keys {
                let has_any = self
                    .rows
                    .iter()
                    .any(|r| &r.method == method && &r.mode == mode && r.metric == metric);
                if !has_any {
                    continue;
                }
                let label = if mode == "vad_plus" {
                    format!("{} (VAD+)", display_method(method))
                } else {
                    display_method(method).to_string()
                };
                out.push_str(&format!("| {label} |"));
                for a in &alphas {
                    match self.get(method, mode, *a, metric) {
                        Some(r) => {
                            out.push_str(&format!(" {} |", fmt_cell(metric, r.mean, r.std_err)))
                        }
                        None => out.push_str(" — |"),
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, format: ReportFormat, path: &Path) -> Result<()> {
        fs::write(path, self.render(format))?;
        Ok(())
    }

    /// Parse the CSV rendering back; used to verify the round trip.
    pub fn parse_csv(text: &str) -> Result<ReportTable> {
        let mut rows = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "method,mode,alpha,metric,mean,std_err,reps")) => {}
            _ => {
                return Err(Error::Parse { line: 1, message: "bad report header".to_string() })
            }
        }
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse {
                    line: idx as u64 + 1,
                    message: format!("expected 7 fields, got {}", fields.len()),
                });
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line: idx as u64 + 1,
                    message: format!("'{s}' is not a number"),
                })
            };
            rows.push(ReportRow {
                method: fields[0].to_string(),
                mode: fields[1].to_string(),
                alpha: parse_f(fields[2])?,
                metric: fields[3].to_string(),
                mean: parse_f(fields[4])?,
                std_err: parse_f(fields[5])?,
                reps: fields[6].parse().map_err(|_| Error::Parse {
                    line: idx as u64 + 1,
                    message: format!("'{}' is not a count", fields[6]),
                })?,
            });
        }
        Ok(ReportTable { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, mean: f64, se: f64) -> ReportRow {
        ReportRow {
            method: "vanilla".into(),
            mode: "original".into(),
            alpha: 0.02,
            metric: metric.into(),
            mean,
            std_err: se,
            reps: 100,
        }
    }

    #[test]
    fn single_row_csv_is_two_lines() {
        let table = ReportTable { rows: vec![row("ece", 0.0656, 0.0019)] };
        let csv = table.render_csv();
        assert_eq!(csv.trim_end().lines().count(), 2);
        assert!(csv.starts_with("method,mode,alpha,metric,mean,std_err,reps\n"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let table = ReportTable {
            rows: vec![
                row("calibration_error", 0.08550000123456789, 0.0068),
                row("ece", 1.0 / 3.0, 2.0 / 7.0),
            ],
        };
        let back = ReportTable::parse_csv(&table.render_csv()).unwrap();
        for (a, b) in table.rows.iter().zip(&back.rows) {
            assert_eq!(a.mean, b.mean, "mean must round-trip bit exactly");
            assert_eq!(a.std_err, b.std_err);
            assert_eq!(a.alpha, b.alpha);
        }
    }

    #[test]
    fn markdown_formats_percent_cells() {
        let table = ReportTable { rows: vec![row("calibration_error", 0.0855, 0.0068)] };
        let md = table.render_markdown();
        assert!(md.contains("8.55%±0.68%"), "{md}");
        assert!(md.contains("α=2%"));
        assert!(md.contains("| Vanilla |"));
    }

    #[test]
    fn markdown_formats_level_cells() {
        let table = ReportTable { rows: vec![row("ece", 0.0656, 0.0019)] };
        let md = table.render_markdown();
        assert!(md.contains("0.0656±0.0019"), "{md}");
    }
}
