//! CSV and JSON writers. Undefined cells are `--` in CSV and `null` in JSON;
//! numbers use the shortest representation that parses back to the same f64.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::{AggregateRow, BefRegime, CohortFilter, Column, CorrelationMatrix, ReportError};
use crate::corpus;
use crate::metrics::{ProblemMetrics, RunMetrics};

pub const SUMMARY_STEM: &str = "summary";
pub const STATS_FILE: &str = "stats";
pub const CORRELATION_STEM: &str = "correlation";

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "run_id",
    "model_name",
    "temperature",
    "cohort",
    "pass_at_1",
    "sctd_jsd_pct",
    "sctd_tau_pct",
    "dctd_jsd_pct",
    "dctd_tau_pct",
    "bef_jsd",
    "bef_tau",
    "n_problems",
];

const METRICS_CSV_COLUMNS: [&str; 12] = [
    "problem_id",
    "cohort",
    "n",
    "m",
    "m_used",
    "r_used",
    "sctd_jsd",
    "sctd_tau",
    "dctd_jsd",
    "dctd_tau",
    "bef_jsd",
    "bef_tau",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

pub fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "--".to_string(),
    }
}

pub fn detail_file_name(run_id: &str, format: ReportFormat) -> String {
    format!("detail_{run_id}.{}", format.extension())
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    run_id: &'a str,
    model_name: &'a str,
    temperature: f64,
    cohort: String,
    pass_at_1: Option<f64>,
    sctd_jsd_pct: Option<f64>,
    sctd_tau_pct: Option<f64>,
    dctd_jsd_pct: Option<f64>,
    dctd_tau_pct: Option<f64>,
    bef_jsd: Option<f64>,
    bef_tau: Option<f64>,
    n_problems: usize,
}

impl<'a> SummaryRecord<'a> {
    fn of(row: &'a AggregateRow) -> Self {
        let mean = |c: Column| row.reported(c).mean;
        SummaryRecord {
            run_id: &row.run_id,
            model_name: &row.model_name,
            temperature: row.temperature,
            cohort: row.cohort.to_string(),
            pass_at_1: row.pass_at_1,
            sctd_jsd_pct: mean(Column::SctdJsd),
            sctd_tau_pct: mean(Column::SctdTau),
            dctd_jsd_pct: mean(Column::DctdJsd),
            dctd_tau_pct: mean(Column::DctdTau),
            bef_jsd: mean(Column::BefJsd),
            bef_tau: mean(Column::BefTau),
            n_problems: row.n_problems,
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.model_name.to_string(),
            self.temperature.to_string(),
            self.cohort.clone(),
            fmt_cell(self.pass_at_1),
            fmt_cell(self.sctd_jsd_pct),
            fmt_cell(self.sctd_tau_pct),
            fmt_cell(self.dctd_jsd_pct),
            fmt_cell(self.dctd_tau_pct),
            fmt_cell(self.bef_jsd),
            fmt_cell(self.bef_tau),
            self.n_problems.to_string(),
        ]
    }
}

#[derive(Serialize)]
struct StatsRecord<'a> {
    run_id: &'a str,
    cohort: String,
    metric: &'static str,
    mean: Option<f64>,
    median: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
    n: usize,
}

impl StatsRecord<'_> {
    const HEADER: [&'static str; 8] = ["run_id", "cohort", "metric", "mean", "median", "min", "max", "n"];

    fn cells(&self) -> Vec<String> {
        vec![
            self.run_id.to_string(),
            self.cohort.clone(),
            self.metric.to_string(),
            fmt_cell(self.mean),
            fmt_cell(self.median),
            fmt_cell(self.min),
            fmt_cell(self.max),
            self.n.to_string(),
        ]
    }
}

#[derive(Serialize)]
struct DetailRecord<'a> {
    problem_id: &'a str,
    cohort: &'static str,
    n: usize,
    m: usize,
    m_used: usize,
    r_used: usize,
    sctd_jsd_pct: Option<f64>,
    sctd_tau_pct: Option<f64>,
    dctd_jsd_pct: Option<f64>,
    dctd_tau_pct: Option<f64>,
    bef_jsd: Option<f64>,
    bef_tau: Option<f64>,
    bef_jsd_regime: Option<BefRegime>,
    bef_tau_regime: Option<BefRegime>,
}

impl<'a> DetailRecord<'a> {
    const HEADER: [&'static str; 14] = [
        "problem_id",
        "cohort",
        "n",
        "m",
        "m_used",
        "r_used",
        "sctd_jsd_pct",
        "sctd_tau_pct",
        "dctd_jsd_pct",
        "dctd_tau_pct",
        "bef_jsd",
        "bef_tau",
        "bef_jsd_regime",
        "bef_tau_regime",
    ];

    fn of(p: &'a ProblemMetrics) -> Self {
        let s = &p.scores;
        DetailRecord {
            problem_id: &p.problem_id,
            cohort: p.cohort.as_str(),
            n: p.n,
            m: p.m,
            m_used: s.m_used,
            r_used: s.r_used,
            sctd_jsd_pct: Column::SctdJsd.reported(s),
            sctd_tau_pct: Column::SctdTau.reported(s),
            dctd_jsd_pct: Column::DctdJsd.reported(s),
            dctd_tau_pct: Column::DctdTau.reported(s),
            bef_jsd: s.bef_jsd,
            bef_tau: s.bef_tau,
            bef_jsd_regime: s.bef_jsd.map(BefRegime::classify),
            bef_tau_regime: s.bef_tau.map(BefRegime::classify),
        }
    }

    fn cells(&self) -> Vec<String> {
        let regime = |r: Option<BefRegime>| r.map_or("--", BefRegime::as_str).to_string();
        vec![
            self.problem_id.to_string(),
            self.cohort.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            self.m_used.to_string(),
            self.r_used.to_string(),
            fmt_cell(self.sctd_jsd_pct),
            fmt_cell(self.sctd_tau_pct),
            fmt_cell(self.dctd_jsd_pct),
            fmt_cell(self.dctd_tau_pct),
            fmt_cell(self.bef_jsd),
            fmt_cell(self.bef_tau),
            regime(self.bef_jsd_regime),
            regime(self.bef_tau_regime),
        ]
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, ReportError> {
    corpus::write_atomic(&path, bytes).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the summary, per-column statistics and one per-problem detail file
/// per run into `out_dir`. Returns the written paths.
pub fn emit_report(
    rows: &[AggregateRow],
    runs: &[RunMetrics],
    filter: CohortFilter,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let ext = format.extension();
    let mut written = Vec::new();

    let summary: Vec<SummaryRecord> = rows.iter().map(SummaryRecord::of).collect();
    let bytes = match format {
        ReportFormat::Csv => csv_bytes(&SUMMARY_COLUMNS, summary.iter().map(SummaryRecord::cells)),
        ReportFormat::Json => corpus::to_pretty_json(&summary),
    };
    written.push(write(out_dir.join(format!("{SUMMARY_STEM}.{ext}")), &bytes)?);

    let stats: Vec<StatsRecord> = rows
        .iter()
        .flat_map(|row| {
            Column::ALL.map(|c| {
                let s = row.reported(c);
                StatsRecord {
                    run_id: &row.run_id,
                    cohort: row.cohort.to_string(),
                    metric: c.name(),
                    mean: s.mean,
                    median: s.median,
                    min: s.min,
                    max: s.max,
                    n: s.n,
                }
            })
        })
        .collect();
    let bytes = match format {
        ReportFormat::Csv => csv_bytes(&StatsRecord::HEADER, stats.iter().map(StatsRecord::cells)),
        ReportFormat::Json => corpus::to_pretty_json(&stats),
    };
    written.push(write(out_dir.join(format!("{STATS_FILE}.{ext}")), &bytes)?);

    for run in runs {
        let details: Vec<DetailRecord> = run
            .problems
            .iter()
            .filter(|p| filter.admits(p.cohort))
            .map(DetailRecord::of)
            .collect();
        let bytes = match format {
            ReportFormat::Csv => csv_bytes(&DetailRecord::HEADER, details.iter().map(DetailRecord::cells)),
            ReportFormat::Json => corpus::to_pretty_json(&details),
        };
        written.push(write(out_dir.join(detail_file_name(&run.run_id, format)), &bytes)?);
    }
    Ok(written)
}

pub fn emit_correlation(
    matrix: &CorrelationMatrix,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<PathBuf, ReportError> {
    let bytes = match format {
        ReportFormat::Csv => {
            let mut header = vec!["metric"];
            header.extend(matrix.columns.iter().map(String::as_str));
            let rows = matrix.columns.iter().zip(&matrix.values).map(|(name, row)| {
                std::iter::once(name.clone())
                    .chain(row.iter().map(|v| fmt_cell(*v)))
                    .collect()
            });
            csv_bytes(&header, rows)
        }
        ReportFormat::Json => corpus::to_pretty_json(matrix),
    };
    write(out_dir.join(format!("{CORRELATION_STEM}.{}", format.extension())), &bytes)
}

/// Raw per-problem scores of one run as CSV.
pub fn metrics_csv_bytes(run: &RunMetrics) -> Vec<u8> {
    csv_bytes(
        &METRICS_CSV_COLUMNS,
        run.problems.iter().map(|p| {
            let s = &p.scores;
            vec![
                p.problem_id.clone(),
                p.cohort.as_str().to_string(),
                p.n.to_string(),
                p.m.to_string(),
                s.m_used.to_string(),
                s.r_used.to_string(),
                fmt_cell(s.sctd_jsd),
                fmt_cell(s.sctd_tau),
                fmt_cell(s.dctd_jsd),
                fmt_cell(s.dctd_tau),
                fmt_cell(s.bef_jsd),
                fmt_cell(s.bef_tau),
            ]
        }),
    )
}

pub fn write_metrics_csv(run: &RunMetrics, path: &Path) -> Result<(), ReportError> {
    write(path.to_path_buf(), &metrics_csv_bytes(run)).map(drop)
}
