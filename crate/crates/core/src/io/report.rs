//! Deterministic report output.
//!
//! Both encodings print numbers with six significant digits and end every
//! line with LF. The structured encoding sorts object keys.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::AnalysisReport;
use crate::error::{Error, Result};
use crate::io::format::{round6, sig6};
use crate::model::Crossover;
use crate::recommend::{BarrierAdvice, ReductionRecommendation};
use crate::reproduce::{ConcurrencyCheck, SwitchPointRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Tsv,
    Structured,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<ReportFormat> {
        match s {
            "tsv" => Some(ReportFormat::Tsv),
            "structured" | "json" => Some(ReportFormat::Structured),
            _ => None,
        }
    }
}

/// A matrix over two launch dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub row_label: String,
    pub column_label: String,
    pub rows: Vec<u32>,
    pub columns: Vec<u32>,
    /// `values[r][c]`; `None` where no data exists.
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn new(row_label: &str, column_label: &str, rows: Vec<u32>, columns: Vec<u32>) -> Self {
        let values = vec![vec![None; columns.len()]; rows.len()];
        Heatmap {
            row_label: row_label.into(),
            column_label: column_label.into(),
            rows,
            columns,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", content = "data", rename_all = "snake_case")]
pub enum Report {
    SwitchPoints(Vec<SwitchPointRecord>),
    Concurrency(Vec<ConcurrencyCheck>),
    Analysis(AnalysisReport),
    Heatmap(Heatmap),
    Series(SeriesSet),
    Reduction(ReductionRecommendation),
    Barrier(BarrierAdvice),
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Tsv => tsv(report).into_bytes(),
        ReportFormat::Structured => structured(report).into_bytes(),
    }
}

pub fn write_report(report: &Report, format: ReportFormat, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, emit_report(report, format)).map_err(Error::from)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), sig6)
}

fn crossover(c: Crossover) -> String {
    match c {
        Crossover::At(x) => sig6(x),
        Crossover::NoCrossover => "none".to_string(),
    }
}

fn row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join("\t"));
    out.push('\n');
}

fn tsv(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::SwitchPoints(records) => {
            out.push_str("device\tscenery\tlabel\tsync_cycles\tN_l\tN_m\n");
            for r in records {
                row(
                    &mut out,
                    &[
                        r.device.to_string(),
                        r.scenery.to_string(),
                        r.label.clone(),
                        sig6(r.sync_cycles),
                        crossover(r.n_l),
                        sig6(r.n_m),
                    ],
                );
            }
        }
        Report::Concurrency(checks) => {
            out.push_str("device\tscenery\tlabel\tlatency_cycles\tthroughput_bytes_per_cycle\tconcurrency_bytes\tpublished_bytes\trelative_error\n");
            for c in checks {
                row(
                    &mut out,
                    &[
                        c.device.to_string(),
                        c.scenery.to_string(),
                        c.label.clone(),
                        sig6(c.latency_cycles),
                        sig6(c.throughput),
                        sig6(c.computed),
                        sig6(c.published),
                        sig6(c.relative_error()),
                    ],
                );
            }
        }
        Report::Analysis(a) => {
            out.push_str("group\tquantity\tlabel\tvalue\tunit\tstddev\tper_run_stddev\tdiagnostics\n");
            for r in &a.records {
                let diagnostics = if r.estimate.diagnostics.is_empty() {
                    "-".to_string()
                } else {
                    r.estimate.diagnostics.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(",")
                };
                row(
                    &mut out,
                    &[
                        r.group.clone(),
                        r.quantity.as_str().to_string(),
                        r.label.clone().unwrap_or_else(|| "-".into()),
                        sig6(r.estimate.value),
                        r.estimate.domain.unit().to_string(),
                        opt(r.estimate.stddev),
                        opt(r.estimate.per_run_stddev),
                        diagnostics,
                    ],
                );
            }
        }
        Report::Heatmap(h) => {
            let mut header = vec![format!("{}\\{}", h.row_label, h.column_label)];
            header.extend(h.columns.iter().map(u32::to_string));
            row(&mut out, &header);
            for (r, values) in h.rows.iter().zip(&h.values) {
                let mut fields = vec![r.to_string()];
                fields.extend(values.iter().map(|v| v.map_or_else(|| "nan".to_string(), sig6)));
                row(&mut out, &fields);
            }
        }
        Report::Series(s) => {
            row(&mut out, &["series".to_string(), s.x_label.clone(), s.y_label.clone()]);
            for series in &s.series {
                for &(x, y) in &series.points {
                    row(&mut out, &[series.name.clone(), sig6(x), sig6(y)]);
                }
            }
        }
        Report::Reduction(r) => {
            out.push_str("candidate\tconcurrency_bytes\tmodel_cycles\tchosen\n");
            for (i, c) in r.costs.iter().enumerate() {
                row(
                    &mut out,
                    &[
                        c.label.clone(),
                        sig6(c.concurrency_bytes),
                        sig6(c.model_cycles),
                        if i == r.chosen_index { "yes" } else { "no" }.to_string(),
                    ],
                );
            }
        }
        Report::Barrier(advice) => {
            out.push_str("mechanism\tlaunch_overhead_ns\tper_barrier_ns\ttotal_ns\tstatus\n");
            match advice {
                BarrierAdvice::Recommended(r) => {
                    for c in &r.costs {
                        let status = if c.mechanism == r.chosen { "chosen" } else { "ok" };
                        row(
                            &mut out,
                            &[
                                c.mechanism.to_string(),
                                sig6(c.launch_overhead_ns),
                                sig6(c.per_barrier_ns),
                                sig6(c.total_ns),
                                status.to_string(),
                            ],
                        );
                    }
                    for m in &r.skipped {
                        row(&mut out, &[m.to_string(), "-".into(), "-".into(), "-".into(), "no_data".into()]);
                    }
                }
                BarrierAdvice::InsufficientData { missing, .. } => {
                    for m in missing {
                        row(&mut out, &[m.to_string(), "-".into(), "-".into(), "-".into(), "no_data".into()]);
                    }
                }
            }
        }
    }
    out
}

fn structured(report: &Report) -> String {
    let mut value = serde_json::to_value(report).expect("reports serialize");
    round_numbers(&mut value);
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round6(n.as_f64().expect("f64"));
            if let Some(rounded) = serde_json::Number::from_f64(x) {
                *n = rounded;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}
