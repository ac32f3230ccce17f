//! Per-run aggregation of stability scores.

mod correlate;
mod emit;

pub use correlate::{correlate_external, parse_external, CorrelationMatrix, ExternalMetrics, OUR_COLUMNS};
pub use emit::{
    detail_file_name, emit_correlation, emit_report, fmt_cell, write_metrics_csv, ReportFormat, CORRELATION_STEM,
    STATS_FILE, SUMMARY_COLUMNS, SUMMARY_STEM,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CohortLabel;
use crate::divergence::StabilityScores;
use crate::metrics::{ProblemMetrics, RunMetrics};

pub const REDUNDANT_ABOVE: f64 = 1000.0;
pub const UNSTABLE_BELOW: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BefRegime {
    Redundant,
    Aligned,
    Unstable,
}

impl BefRegime {
    pub fn classify(bef: f64) -> BefRegime {
        if bef > REDUNDANT_ABOVE {
            BefRegime::Redundant
        } else if bef < UNSTABLE_BELOW {
            BefRegime::Unstable
        } else {
            BefRegime::Aligned
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BefRegime::Redundant => "redundant",
            BefRegime::Aligned => "aligned",
            BefRegime::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortFilter {
    Only(CohortLabel),
    All,
}

impl Default for CohortFilter {
    fn default() -> Self {
        CohortFilter::Only(CohortLabel::AllSuccess)
    }
}

impl CohortFilter {
    pub fn admits(self, label: CohortLabel) -> bool {
        match self {
            CohortFilter::Only(only) => only == label,
            CohortFilter::All => true,
        }
    }
}

impl fmt::Display for CohortFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohortFilter::Only(label) => f.write_str(label.as_str()),
            CohortFilter::All => f.write_str("all"),
        }
    }
}

impl FromStr for CohortFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(CohortFilter::All);
        }
        s.parse::<CohortLabel>()
            .map(CohortFilter::Only)
            .map_err(|_| format!("unknown cohort {s:?} (expected all_success, some_success, all_fail or all)"))
    }
}

/// The six reported metric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    SctdJsd,
    SctdTau,
    DctdJsd,
    DctdTau,
    BefJsd,
    BefTau,
}

impl Column {
    pub const ALL: [Column; 6] = [
        Column::SctdJsd,
        Column::SctdTau,
        Column::DctdJsd,
        Column::DctdTau,
        Column::BefJsd,
        Column::BefTau,
    ];

    pub fn raw(self, s: &StabilityScores) -> Option<f64> {
        match self {
            Column::SctdJsd => s.sctd_jsd,
            Column::SctdTau => s.sctd_tau,
            Column::DctdJsd => s.dctd_jsd,
            Column::DctdTau => s.dctd_tau,
            Column::BefJsd => s.bef_jsd,
            Column::BefTau => s.bef_tau,
        }
    }

    /// Divergences are reported as percentages; BEF stays a raw ratio.
    pub fn is_pct(self) -> bool {
        !matches!(self, Column::BefJsd | Column::BefTau)
    }

    pub fn scale(self) -> f64 {
        if self.is_pct() {
            100.0
        } else {
            1.0
        }
    }

    /// Name of the reported (possibly scaled) column.
    pub fn name(self) -> &'static str {
        match self {
            Column::SctdJsd => "sctd_jsd_pct",
            Column::SctdTau => "sctd_tau_pct",
            Column::DctdJsd => "dctd_jsd_pct",
            Column::DctdTau => "dctd_tau_pct",
            Column::BefJsd => "bef_jsd",
            Column::BefTau => "bef_tau",
        }
    }

    pub fn reported(self, s: &StabilityScores) -> Option<f64> {
        self.raw(s).map(|v| v * self.scale())
    }
}

/// Summary statistics of one column over the problems where it is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub n: usize,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> ColumnStats {
        if values.is_empty() {
            return ColumnStats::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
        };
        ColumnStats {
            mean: Some(sorted.iter().sum::<f64>() / k as f64),
            median: Some(median),
            min: Some(sorted[0]),
            max: Some(sorted[k - 1]),
            n: k,
        }
    }

    fn scaled(self, factor: f64) -> ColumnStats {
        let f = |v: Option<f64>| v.map(|x| x * factor);
        ColumnStats {
            mean: f(self.mean),
            median: f(self.median),
            min: f(self.min),
            max: f(self.max),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub run_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub cohort: CohortFilter,
    /// Passing candidates over all generated candidates, whatever the cohort.
    pub pass_at_1: Option<f64>,
    /// Raw (unscaled) statistics, indexed like [`Column::ALL`].
    pub raw: [ColumnStats; 6],
    pub n_problems: usize,
}

impl AggregateRow {
    /// True when no problem survived the cohort filter.
    pub fn is_empty(&self) -> bool {
        self.n_problems == 0
    }

    pub fn raw_stats(&self, column: Column) -> ColumnStats {
        self.raw[column as usize]
    }

    /// Statistics in reporting units: ×100 for divergences, raw for BEF.
    pub fn reported(&self, column: Column) -> ColumnStats {
        self.raw_stats(column).scaled(column.scale())
    }
}

pub fn pass_at_1(problems: &[ProblemMetrics]) -> Option<f64> {
    let n: usize = problems.iter().map(|p| p.n).sum();
    let m: usize = problems.iter().map(|p| p.m).sum();
    (n > 0).then(|| m as f64 / n as f64)
}

pub fn aggregate(run: &RunMetrics, filter: CohortFilter) -> AggregateRow {
    let selected: Vec<&ProblemMetrics> = run.problems.iter().filter(|p| filter.admits(p.cohort)).collect();
    let raw = Column::ALL.map(|c| {
        let values: Vec<f64> = selected.iter().filter_map(|p| c.raw(&p.scores)).collect();
        ColumnStats::of(&values)
    });
    AggregateRow {
        run_id: run.run_id.clone(),
        model_name: run.model_name.clone(),
        temperature: run.temperature,
        cohort: filter,
        pass_at_1: pass_at_1(&run.problems),
        raw,
        n_problems: selected.len(),
    }
}

/// Product-moment correlation; `None` for mismatched or short inputs or
/// zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
