use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BenchError, BenchRow, TimingStats};
use crate::suites::suite_by_label;

pub const CSV_HEADER: &str =
    "function,avg_ns,std_ns,max_ns,min_ns,bytes,packets,pqc_bits,classical_bits,verified";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(BenchError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    function: String,
    avg_ns: f64,
    std_ns: f64,
    max_ns: u64,
    min_ns: u64,
    bytes: usize,
    packets: usize,
    pqc_bits: u16,
    classical_bits: u16,
    verified: bool,
    iterations: usize,
}

impl From<&BenchRow> for JsonRow {
    fn from(r: &BenchRow) -> Self {
        JsonRow {
            function: r.label.to_string(),
            avg_ns: r.timing.average_ns,
            std_ns: r.timing.std_dev_ns,
            max_ns: r.timing.max_ns,
            min_ns: r.timing.min_ns,
            bytes: r.bytes_transfer,
            packets: r.packets,
            pqc_bits: r.strength_pqc,
            classical_bits: r.strength_classical,
            verified: r.verified_accounting,
            iterations: r.timing.iterations,
        }
    }
}

impl TryFrom<JsonRow> for BenchRow {
    type Error = BenchError;

    fn try_from(j: JsonRow) -> Result<Self, BenchError> {
        let suite = suite_by_label(&j.function)?;
        let sane = j.min_ns as f64 <= j.avg_ns
            && j.avg_ns <= j.max_ns as f64
            && j.std_ns >= 0.0
            && j.iterations >= 2;
        if !sane {
            return Err(BenchError::Parse(format!(
                "{}: inconsistent timing figures",
                j.function
            )));
        }
        Ok(BenchRow {
            label: suite.label,
            timing: TimingStats {
                average_ns: j.avg_ns,
                std_dev_ns: j.std_ns,
                max_ns: j.max_ns,
                min_ns: j.min_ns,
                iterations: j.iterations,
            },
            bytes_transfer: j.bytes,
            packets: j.packets,
            strength_pqc: j.pqc_bits,
            strength_classical: j.classical_bits,
            verified_accounting: j.verified,
        })
    }
}

/// Reads rows back from a JSON report produced by [`render_report`].
pub fn parse_json_report(text: &str) -> Result<Vec<BenchRow>, BenchError> {
    let rows: Vec<JsonRow> =
        serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
    if rows.is_empty() {
        return Err(BenchError::NoRows);
    }
    rows.into_iter().map(BenchRow::try_from).collect()
}

fn table(rows: &[BenchRow]) -> String {
    let headers = [
        "Function",
        "Average (ns)",
        "Std Dev (ns)",
        "Max (ns)",
        "Min (ns)",
        "Bytes",
        "Packets",
        "PQC bits",
        "Classical bits",
        "Verified",
    ];
    let cells: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            [
                r.label.to_string(),
                format!("{:.2}", r.timing.average_ns),
                format!("{:.2}", r.timing.std_dev_ns),
                r.timing.max_ns.to_string(),
                r.timing.min_ns.to_string(),
                r.bytes_transfer.to_string(),
                r.packets.to_string(),
                r.strength_pqc.to_string(),
                r.strength_classical.to_string(),
                if r.verified_accounting { "yes" } else { "no" }.to_string(),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |fields: &mut dyn Iterator<Item = &str>| {
        let mut parts = Vec::new();
        for (i, f) in fields.enumerate() {
            if i == 0 {
                parts.push(format!("{f:<w$}", w = widths[i]));
            } else {
                parts.push(format!("{f:>w$}", w = widths[i]));
            }
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut rule.iter().map(String::as_str));
    for row in &cells {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

fn csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{},{},{},{},{},{},{}",
            r.label,
            r.timing.average_ns,
            r.timing.std_dev_ns,
            r.timing.max_ns,
            r.timing.min_ns,
            r.bytes_transfer,
            r.packets,
            r.strength_pqc,
            r.strength_classical,
            r.verified_accounting
        );
    }
    out
}

pub fn render_report(rows: &[BenchRow], format: ReportFormat) -> Result<String, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::NoRows);
    }
    Ok(match format {
        ReportFormat::Table => table(rows),
        ReportFormat::Csv => csv(rows),
        ReportFormat::Json => {
            let json: Vec<JsonRow> = rows.iter().map(JsonRow::from).collect();
            let mut s = serde_json::to_string_pretty(&json).expect("rows serialize");
            s.push('\n');
            s
        }
    })
}
