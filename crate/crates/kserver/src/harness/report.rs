//! Report assembly and serialization.

use crate::domain::{Configuration, Cost, NodeId};
use crate::{Error, Result};

/// One (run, policy) result row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub policy: String,
    pub opt_cost: Cost,
    pub cost: Cost,
    pub ratio: f64,
    pub invalid: usize,
    pub seed: u64,
    pub start: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMean {
    pub policy: String,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<RunRecord>,
    pub means: Vec<PolicyMean>,
}

impl ExperimentReport {
    pub fn mean_ratio(&self, policy: &str) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.policy == policy)
            .map(|m| m.mean_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// Tab-separated table with one row per policy and the per-run ratios
    /// slash-joined, mimicking compact published layouts.
    TsvTable,
}

fn ratio_str(ratio: f64) -> String {
    if ratio.is_infinite() {
        "inf".to_string()
    } else {
        format!("{ratio:.2}")
    }
}

/// Render a report. CSV output: the header, one row per (run, policy),
/// then one `mean` aggregate row per policy.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("run,policy,opt_cost,cost,ratio,invalid,seed,start_config\n");
            for row in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.run,
                    row.policy,
                    row.opt_cost,
                    row.cost,
                    ratio_str(row.ratio),
                    row.invalid,
                    row.seed,
                    row.start,
                ));
            }
            for mean in &report.means {
                out.push_str(&format!(
                    "mean,{},,,{},,,\n",
                    mean.policy,
                    ratio_str(mean.mean_ratio)
                ));
            }
            out
        }
        ReportFormat::TsvTable => {
            let mut out = String::from("policy\tratios\tmean\n");
            for mean in &report.means {
                let ratios: Vec<String> = report
                    .rows
                    .iter()
                    .filter(|r| r.policy == mean.policy)
                    .map(|r| ratio_str(r.ratio))
                    .collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\n",
                    mean.policy,
                    ratios.join("/"),
                    ratio_str(mean.mean_ratio)
                ));
            }
            out
        }
    }
}

/// Parse a CSV report back into memory. Ratios carry the file's 2-decimal
/// precision, so emitting the parsed report reproduces the input bytes.
pub fn parse_report_csv(text: &str) -> Result<ExperimentReport> {
    let err = |line: usize, msg: String| Error::Parse(format!("report line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "run,policy,opt_cost,cost,ratio,invalid,seed,start_config")) => {}
        other => {
            return Err(err(1, format!("bad header {:?}", other.map(|(_, l)| l))));
        }
    }
    let parse_ratio = |text: &str, line: usize| -> Result<f64> {
        if text == "inf" {
            return Ok(f64::INFINITY);
        }
        text.parse()
            .map_err(|_| err(line, format!("bad ratio {text:?}")))
    };
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(err(line_no, format!("expected 8 fields, got {}", fields.len())));
        }
        if fields[0] == "mean" {
            means.push(PolicyMean {
                policy: fields[1].to_string(),
                mean_ratio: parse_ratio(fields[4], line_no)?,
            });
            continue;
        }
        if !means.is_empty() {
            return Err(err(line_no, "run row after aggregate rows".into()));
        }
        let num = |field: &str, name: &str| -> Result<i64> {
            field
                .parse()
                .map_err(|_| err(line_no, format!("bad {name} {field:?}")))
        };
        let start_nodes = fields[7]
            .split('|')
            .map(|t| num(t, "start node").map(|v| NodeId(v as u32)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(RunRecord {
            run: num(fields[0], "run")? as usize,
            policy: fields[1].to_string(),
            opt_cost: num(fields[2], "opt_cost")?,
            cost: num(fields[3], "cost")?,
            ratio: parse_ratio(fields[4], line_no)?,
            invalid: num(fields[5], "invalid")? as usize,
            seed: fields[6]
                .parse()
                .map_err(|_| err(line_no, format!("bad seed {:?}", fields[6])))?,
            start: Configuration::from_nodes(start_nodes)
                .map_err(|e| err(line_no, e.to_string()))?,
        });
    }
    Ok(ExperimentReport { rows, means })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> ExperimentReport {
        let row = |run, policy: &str, opt, cost, ratio, invalid, seed| RunRecord {
            run,
            policy: policy.to_string(),
            opt_cost: opt,
            cost,
            ratio,
            invalid,
            seed,
            start: Configuration::from_nodes([NodeId(0), NodeId(3)]).unwrap(),
        };
        ExperimentReport {
            rows: vec![
                row(0, "moo", 402, 402, 1.0, 0, 17),
                row(0, "harmonic", 402, 856, 856.0 / 402.0, 0, 18),
                row(1, "moo", 390, 400, 400.0 / 390.0, 2, 19),
                row(1, "harmonic", 390, 900, 900.0 / 390.0, 0, 20),
            ],
            means: vec![
                PolicyMean {
                    policy: "moo".into(),
                    mean_ratio: (1.0 + 400.0 / 390.0) / 2.0,
                },
                PolicyMean {
                    policy: "harmonic".into(),
                    mean_ratio: (856.0 / 402.0 + 900.0 / 390.0) / 2.0,
                },
            ],
        }
    }

    #[test]
    fn csv_shape_and_formatting() {
        let csv = emit_report(&sample_report(), ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert_eq!(lines[0], "run,policy,opt_cost,cost,ratio,invalid,seed,start_config");
        assert_eq!(lines[1], "0,moo,402,402,1.00,0,17,0|3");
        assert_eq!(lines[2], "0,harmonic,402,856,2.13,0,18,0|3");
        assert!(lines[5].starts_with("mean,moo,,,1.01,"));
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let csv = emit_report(&sample_report(), ReportFormat::Csv);
        let parsed = parse_report_csv(&csv).unwrap();
        assert_eq!(emit_report(&parsed, ReportFormat::Csv), csv);
    }

    #[test]
    fn tsv_table_layout() {
        let tsv = emit_report(&sample_report(), ReportFormat::TsvTable);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "policy\tratios\tmean");
        assert_eq!(lines[1], "moo\t1.00/1.03\t1.01");
        assert_eq!(lines[2], "harmonic\t2.13/2.31\t2.22");
    }

    #[test]
    fn parse_rejects_malformed_reports() {
        assert!(parse_report_csv("nope\n").is_err());
        let missing = "run,policy,opt_cost,cost,ratio,invalid,seed,start_config\n0,moo,1,2\n";
        assert!(parse_report_csv(missing).is_err());
    }
}
